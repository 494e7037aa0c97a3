//! Energies, fluxes and spacetime functionals of trajectories, and discrete
//! Stokes audits of the multiplier energy identities.
//!
//! Metric signature is (−,+,+,+), so `□ = −∂_t² + Δ` and the equation reads
//! `□φ = κ|φ|^{p−1}φ`. For a radial multiplier `X = a∂_t + b∂_r` and weight
//! `χ`, the current
//!
//! ```text
//! J_μ = T_μν X^ν − ½ ∂_μχ φ² + χ φ ∂_μφ
//! ```
//!
//! has divergence `T^{μν}π_μν + χ ∂^μφ∂_μφ − ½□χ φ² + χ κ|φ|^{p+1}
//! − |φ|^{p+1} X(κ)/(p+1)`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{invalid, outside, Error, Result};
use crate::geometry::{
    cone_geometry, hyperboloid_radius, null_weights, CompactConeWeights, HyperboloidSpec, PowerParams,
};
use crate::profiles::InitialData;
use crate::quadrature::{composite_rule, GaussLegendre};
use crate::solver::{FieldSample, FieldState, Interp, Model, RadialGrid, Trajectory, Variant};

const FOUR_PI: f64 = 4.0 * PI;

/// Trapezoid rule for `∫ f · 4πr² dr` over the grid, with `f` given the node
/// index, radius and nodal `(φ, ∂_tφ, ∂_rφ)`.
pub fn radial_integral<F>(state: &FieldState, grid: &RadialGrid, f: F) -> f64
where
    F: Fn(usize, f64, f64, f64, f64) -> f64,
{
    let dr = grid.dr;
    let phi = state.phi_nodes(dr);
    let phi_t = state.phi_t_nodes(dr);
    let phi_r = FieldState::phi_r_nodes(&phi, dr);
    let n = grid.n;
    let mut sum = 0.0;
    for i in 1..=n {
        let r = grid.radius(i);
        let w = if i == n { 0.5 } else { 1.0 };
        sum += w * f(i, r, phi[i], phi_t[i], phi_r[i]) * r * r;
    }
    FOUR_PI * sum * dr
}

/// `∫ [½(∂_tφ)² + ½(∂_rφ)² + |φ|^{p+1}/(p+1)] 4πr² dr`.
pub fn conserved_energy(state: &FieldState, p: f64, grid: &RadialGrid) -> f64 {
    radial_integral(state, grid, |_, _, phi, pt, pr| {
        0.5 * pt * pt + 0.5 * pr * pr + phi.abs().powf(p + 1.0) / (p + 1.0)
    })
}

/// Free-wave energy, without the potential term.
pub fn quadratic_energy(state: &FieldState, grid: &RadialGrid) -> f64 {
    radial_integral(state, grid, |_, _, _, pt, pr| 0.5 * pt * pt + 0.5 * pr * pr)
}

/// `∫ |φ|^{p+1} 4πr² dr`.
pub fn potential_energy(state: &FieldState, p: f64, grid: &RadialGrid) -> f64 {
    radial_integral(state, grid, |_, _, phi, _, _| phi.abs().powf(p + 1.0))
}

/// Maximum of `|E(t) − E(0)|/E(0)` over the snapshots; zero when `E(0) = 0`.
pub fn relative_drift(energies: &[f64]) -> f64 {
    let e0 = energies[0];
    if e0 == 0.0 {
        return 0.0;
    }
    energies.iter().map(|e| ((e - e0) / e0).abs()).fold(0.0, f64::max)
}

fn second_derivative(v: &[f64], dr: f64) -> Vec<f64> {
    let n = v.len() - 1;
    let h2 = dr * dr;
    let mut out = vec![0.0; n + 1];
    out[0] = 2.0 * (v[1] - v[0]) / h2;
    for i in 1..n {
        out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    out[n] = (2.0 * v[n] - 5.0 * v[n - 1] + 4.0 * v[n - 2] - v[n - 3]) / h2;
    out
}

/// Radial weighted norm
/// `Σ_{l≤k} ∫(1+r)^{γ₀+2l}(|∂_r^{l+1}φ₀|² + |∂_r^lφ₁|²) + ∫(1+r)^{γ₀}|φ₀|^{p+1}`
/// over the grid, with derivatives by finite differences.
pub fn weighted_energy(state: &FieldState, p: f64, gamma0: f64, k: u32, grid: &RadialGrid) -> Result<f64> {
    if k > 1 {
        return Err(invalid(format!("weighted norm order must be 0 or 1, got {k}")));
    }
    let dr = grid.dr;
    let phi = state.phi_nodes(dr);
    let vel = state.phi_t_nodes(dr);
    let phi_r = FieldState::phi_r_nodes(&phi, dr);
    let (phi_rr, vel_r) = if k == 1 {
        let mut vr = FieldState::phi_r_nodes(&vel, dr);
        vr[0] = 0.0;
        (second_derivative(&phi, dr), vr)
    } else {
        (Vec::new(), Vec::new())
    };
    let n = grid.n;
    let mut sum = 0.0;
    for i in 1..=n {
        let r = grid.radius(i);
        let w = if i == n { 0.5 } else { 1.0 };
        let base = (1.0 + r).powf(gamma0);
        let mut f = base * (phi_r[i] * phi_r[i] + vel[i] * vel[i] + phi[i].abs().powf(p + 1.0));
        if k == 1 {
            let w1 = base * (1.0 + r) * (1.0 + r);
            f += w1 * (phi_rr[i] * phi_rr[i] + vel_r[i] * vel_r[i]);
        }
        sum += w * f * r * r;
    }
    Ok(FOUR_PI * sum * dr)
}

/// Checks analytically whether tail data have a finite weighted norm.
pub fn weighted_norm_diverges(data: &InitialData, p: f64, gamma0: f64) -> Option<String> {
    if let Some(q) = data.position.tail_rate() {
        let need = ((gamma0 + 1.0) / 2.0).max((gamma0 + 3.0) / (p + 1.0));
        if q <= need {
            return Some(format!("position tail rate {q} must exceed {need}"));
        }
    }
    if let Some(q) = data.velocity.tail_rate() {
        let need = (gamma0 + 3.0) / 2.0;
        if q <= need {
            return Some(format!("velocity tail rate {q} must exceed {need}"));
        }
    }
    None
}

/// [`weighted_energy`] of the initial state, signalling divergence for tail
/// data whose norm is infinite.
pub fn weighted_initial_energy(
    data: &InitialData,
    state0: &FieldState,
    params: &PowerParams,
    k: u32,
    grid: &RadialGrid,
) -> Result<f64> {
    if let Some(msg) = weighted_norm_diverges(data, params.p(), params.gamma0()) {
        return Err(Error::Divergent(msg));
    }
    weighted_energy(state0, params.p(), params.gamma0(), k, grid)
}

/// Least-squares slope of `log y` against `log x`.
pub(crate) fn log_log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PecherFit {
    pub slope: f64,
    /// `max{4 − 2p, −2}`.
    pub theory: f64,
}

pub fn pecher_exponent(p: f64) -> f64 {
    (4.0 - 2.0 * p).max(-2.0)
}

/// Fits `log ∫|φ|^{p+1}` against `log(1+t)` over snapshots with `t ≥ t_from`.
pub fn pecher_rate_check(traj: &Trajectory, t_from: f64) -> Result<PecherFit> {
    let p = traj.model.p;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in traj.snapshots.iter().filter(|s| s.t >= t_from) {
        let pot = potential_energy(s, p, &traj.grid);
        if !(pot > 1e-300) {
            return Err(Error::BelowFloor(format!("potential energy {pot:e} at t = {}", s.t)));
        }
        xs.push(1.0 + s.t);
        ys.push(pot);
    }
    if xs.len() < 2 || xs[xs.len() - 1] / xs[0] < 10.0 {
        return Err(invalid("potential-energy fit needs a decade in 1 + t"));
    }
    let (slope, _) = log_log_slope(&xs, &ys);
    Ok(PecherFit {
        slope,
        theory: pecher_exponent(p),
    })
}

/// Running `∬ v₊^{γ₀−ε−1}|φ|^{p+1} 4πr² dr dt`, trapezoid in time, one value
/// per snapshot.
pub fn spacetime_accumulator(traj: &Trajectory) -> Vec<f64> {
    let p = traj.model.p;
    let e = traj.params.gamma0() - traj.params.epsilon() - 1.0;
    let slices: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| {
            radial_integral(s, &traj.grid, |_, r, phi, _, _| {
                let v = 0.5 * (s.t + r);
                v.hypot(1.0).powf(e) * phi.abs().powf(p + 1.0)
            })
        })
        .collect();
    let mut acc = vec![0.0; slices.len()];
    for k in 1..slices.len() {
        let dt = traj.snapshots[k].t - traj.snapshots[k - 1].t;
        acc[k] = acc[k - 1] + 0.5 * dt * (slices[k] + slices[k - 1]);
    }
    acc
}

pub fn spacetime_weighted_integral(traj: &Trajectory) -> f64 {
    *spacetime_accumulator(traj).last().expect("trajectory has a snapshot")
}

/// Quadrature resolution for cone fluxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeQuadrature {
    pub n_r: usize,
    pub n_s: usize,
    pub interp: Interp,
}

impl Default for ConeQuadrature {
    fn default() -> Self {
        Self {
            n_r: 64,
            n_s: 64,
            interp: Interp::Linear,
        }
    }
}

fn check_cone(traj: &Trajectory, t0: f64, r0: f64) -> Result<()> {
    if !(t0 >= 0.0 && r0 >= 0.0) {
        return Err(invalid(format!("apex ({t0}, {r0}) must have t0, r0 >= 0")));
    }
    if t0 > traj.t_end() * (1.0 + 1e-12) || r0 + t0 > traj.grid.r_max {
        return Err(outside(format!(
            "backward cone of ({t0}, {r0}) leaves the trajectory domain"
        )));
    }
    Ok(())
}

/// `∫_{𝒩⁻(q)} ((1+τ)v₊^γ + u₊^γ)|φ|^{p+1} r̃² dr̃ dω̃`.
pub fn cone_weighted_flux(traj: &Trajectory, t0: f64, r0: f64, gamma: f64, quad: ConeQuadrature) -> Result<f64> {
    check_cone(traj, t0, r0)?;
    if t0 == 0.0 {
        return Ok(0.0);
    }
    let p = traj.model.p;
    let geo = cone_geometry(t0, r0, quad.n_r, quad.n_s)?;
    let mut sum = 0.0;
    for (pt, w) in geo.nodes() {
        let phi = traj.phi(pt.t, pt.r, quad.interp)?;
        let nw = null_weights(pt.t, pt.r)?;
        let weight = (1.0 + pt.tau) * nw.v_plus.powf(gamma) + nw.u_plus.powf(gamma);
        sum += w * weight * phi.abs().powf(p + 1.0) * pt.rt * pt.rt;
    }
    Ok(2.0 * PI * sum)
}

/// `∫_{𝓗_u} |φ|^{p+1} dσ = ∫ |φ|^{p+1} 2r² dv dω` along `t − r = 2u`.
pub fn outgoing_flux(traj: &Trajectory, u: f64, interp: Interp) -> Result<f64> {
    let p = traj.model.p;
    let t_end = traj.t_end();
    let v_lo = u.abs();
    let v_hi = (t_end - u).min(traj.grid.r_max + u);
    if !(v_hi > v_lo) {
        return Err(outside(format!("null line u = {u} misses the trajectory domain")));
    }
    let gl = GaussLegendre::new(4);
    let nodes = composite_rule(v_lo, v_hi, 2.0 * traj.grid.dr.max(0.01), &gl);
    let mut sum = 0.0;
    for (v, w) in nodes {
        let t = (u + v).clamp(0.0, t_end);
        let r = (v - u).max(0.0);
        let phi = traj.phi(t, r, interp)?;
        sum += w * phi.abs().powf(p + 1.0) * 2.0 * r * r;
    }
    Ok(FOUR_PI * sum)
}

/// Outgoing fluxes at each `u` and the fitted slope of `log flux` against
/// `log(1+|u|)` over the nonzero values.
pub fn outgoing_flux_decay(traj: &Trajectory, us: &[f64], interp: Interp) -> Result<(Vec<f64>, f64)> {
    let fluxes = us
        .iter()
        .map(|&u| outgoing_flux(traj, u, interp))
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = us
        .iter()
        .zip(&fluxes)
        .filter(|(_, f)| **f > 1e-300)
        .map(|(u, f)| (1.0 + u.abs(), *f))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::BelowFloor("fewer than two nonzero outgoing fluxes".into()));
    }
    Ok((fluxes, log_log_slope(&xs, &ys).0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperboloidFlux {
    pub value: f64,
    /// Largest `t` integrated.
    pub reached: f64,
    pub truncated: bool,
}

/// `∫_{ℍ⁺∩{t≤t_extent}} r^{γ₀}|L(rφ)|² + |L̄φ|² + r²|Lφ|² + 2r²|φ|^{p+1}/(p+1) dt dω`
/// with `r = hyperboloid_radius(t)`.
pub fn hyperboloid_flux(
    traj: &Trajectory,
    spec: &HyperboloidSpec,
    t_extent: f64,
    interp: Interp,
) -> Result<HyperboloidFlux> {
    let p = traj.model.p;
    let g0 = traj.params.gamma0();
    let mut reached = t_extent.min(traj.t_end());
    while reached > 0.0 && hyperboloid_radius(reached, spec)? > traj.grid.r_max {
        reached -= traj.grid.dt;
    }
    let truncated = reached < t_extent;
    let gl = GaussLegendre::new(8);
    let mut sum = 0.0;
    for (t, w) in composite_rule(0.0, reached, 0.25, &gl) {
        let r = hyperboloid_radius(t, spec)?;
        let s = traj.sample(t, r, interp)?;
        let l = s.phi_t + s.phi_r;
        let lb = s.phi_t - s.phi_r;
        let l_rphi = r * l + s.phi;
        let f = r.powf(g0) * l_rphi * l_rphi
            + lb * lb
            + r * r * l * l
            + 2.0 * r * r * s.phi.abs().powf(p + 1.0) / (p + 1.0);
        sum += w * f;
    }
    Ok(HyperboloidFlux {
        value: FOUR_PI * sum,
        reached,
        truncated,
    })
}

/// Multiplier vector field and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierKind {
    /// `X = v₊^γ L + u₊^γ L̄`, `χ = r^{-1}(v₊^γ − u₊^γ)`.
    Exterior,
    /// `X = v_*^γ L + u_*^γ L̄`, `χ = r^{-1}(v_*^γ − u_*^γ)` for the cone of height `big_r`.
    Compact { big_r: f64 },
    /// `X = ∂_t`, `χ = 0`.
    Classical,
    /// `X = r^γ L`, `χ = r^{γ−1}`.
    RWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierSpec {
    pub kind: MultiplierKind,
    pub gamma: f64,
}

impl MultiplierSpec {
    pub fn new(kind: MultiplierKind, gamma: f64) -> Result<Self> {
        let ok = match kind {
            MultiplierKind::Exterior => gamma > 1.0 && gamma < 2.0,
            MultiplierKind::Compact { big_r } => gamma > 0.0 && gamma < 1.0 && big_r > 0.0,
            MultiplierKind::Classical => true,
            MultiplierKind::RWeighted => (0.0..=2.0).contains(&gamma),
        };
        if !ok {
            return Err(invalid(format!("gamma = {gamma} not admissible for {kind:?}")));
        }
        Ok(Self { kind, gamma })
    }

    pub fn classical() -> Self {
        Self {
            kind: MultiplierKind::Classical,
            gamma: 0.0,
        }
    }

    pub fn coefficients(&self, t: f64, r: f64) -> MultiplierCoefficients {
        let g = self.gamma;
        match self.kind {
            MultiplierKind::Classical => MultiplierCoefficients {
                a: 1.0,
                ..Default::default()
            },
            MultiplierKind::RWeighted => {
                let rg1 = r.powf(g - 1.0);
                MultiplierCoefficients {
                    a: r * rg1,
                    b: r * rg1,
                    a_t: 0.0,
                    a_r: g * rg1,
                    b_t: 0.0,
                    b_r: g * rg1,
                    chi: rg1,
                    chi_t: 0.0,
                    chi_r: (g - 1.0) * rg1 / r,
                    box_chi: g * (g - 1.0) * rg1 / (r * r),
                }
            }
            MultiplierKind::Exterior => {
                let u = 0.5 * (t - r);
                let v = 0.5 * (t + r);
                let f = |s: f64| (1.0 + s * s).powf(0.5 * g);
                let df = |s: f64| g * s * (1.0 + s * s).powf(0.5 * g - 1.0);
                let (fu, fv, dfu, dfv) = (f(u), f(v), df(u), df(v));
                let chi = exterior_chi(g, t, r);
                let b = chi * r;
                let a_t = 0.5 * (dfv + dfu);
                let a_r = 0.5 * (dfv - dfu);
                from_null(fu + fv, b, a_t, a_r, a_r, a_t, chi, r)
            }
            MultiplierKind::Compact { big_r } => {
                let w = CompactConeWeights::new(big_r, t, r);
                let (us, vs) = (w.u_star, w.v_star);
                let dg = |s: f64| g * s.powf(g - 1.0);
                let (dgu, dgv) = (dg(us), dg(vs));
                let chi = compact_chi(g, big_r, t, r);
                let b = chi * r;
                let a = vs.powf(g) + us.powf(g);
                from_null(a, b, -dgv - dgu, -dgv + dgu, -dgv + dgu, -dgv - dgu, chi, r)
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn from_null(a: f64, b: f64, a_t: f64, a_r: f64, b_t: f64, b_r: f64, chi: f64, r: f64) -> MultiplierCoefficients {
    let r = r.max(1e-12);
    MultiplierCoefficients {
        a,
        b,
        a_t,
        a_r,
        b_t,
        b_r,
        chi,
        chi_t: b_t / r,
        chi_r: (b_r - chi) / r,
        box_chi: 0.0,
    }
}

/// `X = a∂_t + b∂_r`, the weight `χ`, and their first derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiplierCoefficients {
    pub a: f64,
    pub b: f64,
    pub a_t: f64,
    pub a_r: f64,
    pub b_t: f64,
    pub b_r: f64,
    pub chi: f64,
    pub chi_t: f64,
    pub chi_r: f64,
    pub box_chi: f64,
}

/// `r^{-1}(v₊^γ − u₊^γ)` without cancellation, using
/// `v² − u² = rt`.
pub fn exterior_chi(gamma: f64, t: f64, r: f64) -> f64 {
    let u = 0.5 * (t - r);
    let fu = (1.0 + u * u).powf(0.5 * gamma);
    if r == 0.0 {
        return gamma * u * (1.0 + u * u).powf(0.5 * gamma - 1.0);
    }
    fu * (0.5 * gamma * (r * t / (1.0 + u * u)).ln_1p()).exp_m1() / r
}

/// `r^{-1}(v_*^γ − u_*^γ)` without cancellation, using `v_* = u_* − 2r`.
pub fn compact_chi(gamma: f64, big_r: f64, t: f64, r: f64) -> f64 {
    let us = big_r - t + r;
    if r == 0.0 {
        return -2.0 * gamma * us.powf(gamma - 1.0);
    }
    us.powf(gamma) * (gamma * (-2.0 * r / us).ln_1p()).exp_m1() / r
}

/// `χ − ½γ(v₊^{γ−2}v + u₊^{γ−2}u)`, the coefficient of `|∇̸φ|²` in the
/// exterior bulk term.
pub fn chi_convexity_margin(gamma: f64, t: f64, r: f64) -> f64 {
    let u = 0.5 * (t - r);
    let v = 0.5 * (t + r);
    let term = |s: f64| (1.0 + s * s).powf(0.5 * gamma - 1.0) * s;
    exterior_chi(gamma, t, r) - 0.5 * gamma * (term(v) + term(u))
}

/// `γ(v_*^{γ−1} + u_*^{γ−1}) + r^{-1}(v_*^γ − u_*^γ)`, the compact-cone
/// counterpart.
pub fn compact_coefficient_margin(gamma: f64, big_r: f64, t: f64, r: f64) -> f64 {
    let w = CompactConeWeights::new(big_r, t, r);
    gamma * (w.v_star.powf(gamma - 1.0) + w.u_star.powf(gamma - 1.0)) + compact_chi(gamma, big_r, t, r)
}

/// Null-frame derivatives of `φ` at a point: `Lφ`, `L̄φ`, `|∇̸φ|`, `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullDerivatives {
    pub l: f64,
    pub lbar: f64,
    pub angular: f64,
    pub phi: f64,
}

/// `T^{μν}π^X_{μν}` at `(t, r)` for the potential `2κ|φ|^{p+1}/(p+1)`.
pub fn deformation_contraction(mult: &MultiplierSpec, t: f64, r: f64, d: &NullDerivatives, p: f64, kappa: f64) -> f64 {
    let c = mult.coefficients(t, r);
    let pt = 0.5 * (d.l + d.lbar);
    let pr = 0.5 * (d.l - d.lbar);
    let a2 = d.angular * d.angular;
    let pot = 2.0 * kappa * d.phi.abs().powf(p + 1.0) / (p + 1.0);
    let ttt = 0.5 * (pt * pt + pr * pr + a2 + pot);
    let trr = 0.5 * (pt * pt + pr * pr - a2 - pot);
    let b_over_r = if r > 0.0 { c.b / r } else { c.b_r };
    -c.a_t * ttt - (c.b_t - c.a_r) * pt * pr + c.b_r * trr + b_over_r * (pt * pt - pr * pr - pot)
}

/// Current components `(J_t, J_r)` and divergence at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentPoint {
    pub j_t: f64,
    pub j_r: f64,
    pub div: f64,
}

/// `κ` and `X(κ)` for the trajectory's equation.
fn kappa_and_derivative(model: &Model, c: &MultiplierCoefficients, t: f64, r: f64) -> (f64, f64) {
    if !model.nonlinear {
        return (0.0, 0.0);
    }
    match model.variant {
        Variant::FullSpace => (1.0, 0.0),
        Variant::CompactCone { big_r, .. } => {
            let w = CompactConeWeights::new(big_r, t, r);
            let lam = w.lambda_cc;
            let p = model.p;
            let lam_t = lam * lam * (w.u_star + w.v_star);
            let lam_r = lam * lam * (w.u_star - w.v_star);
            let kappa = lam.powf(3.0 - p);
            let x_kappa = (3.0 - p) * lam.powf(2.0 - p) * (c.a * lam_t + c.b * lam_r);
            (kappa, x_kappa)
        }
    }
}

pub fn current(mult: &MultiplierSpec, model: &Model, t: f64, r: f64, s: &FieldSample) -> CurrentPoint {
    let p = model.p;
    let c = mult.coefficients(t, r);
    let (kappa, x_kappa) = kappa_and_derivative(model, &c, t, r);
    let (phi, pt, pr) = (s.phi, s.phi_t, s.phi_r);
    let ap = phi.abs().powf(p + 1.0);
    let pot = 2.0 * kappa * ap / (p + 1.0);
    let ttt = 0.5 * (pt * pt + pr * pr + pot);
    let trr = 0.5 * (pt * pt + pr * pr - pot);
    let ttr = pt * pr;
    let b_over_r = if matches!(mult.kind, MultiplierKind::Classical) {
        0.0
    } else {
        c.chi
    };
    let t_pi = -c.a_t * ttt - (c.b_t - c.a_r) * ttr + c.b_r * trr + b_over_r * (pt * pt - pr * pr - pot);
    let div = t_pi + c.chi * (pr * pr - pt * pt) - 0.5 * c.box_chi * phi * phi + c.chi * kappa * ap
        - ap * x_kappa / (p + 1.0);
    CurrentPoint {
        j_t: c.a * ttt + c.b * ttr - 0.5 * c.chi_t * phi * phi + c.chi * phi * pt,
        j_r: c.a * ttr + c.b * trr - 0.5 * c.chi_r * phi * phi + c.chi * phi * pr,
        div,
    }
}

/// Closed spacetime regions for the Stokes audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// `t₁ ≤ t ≤ t₂`, `r ≤ r_out`.
    TimeSlab { t1: f64, t2: f64, r_out: f64 },
    /// `u ≤ u₁`, `v ≤ −u₂`, `t ≥ 0`: bounded by the initial slice, the
    /// outgoing cone `t − r = 2u₁` and the incoming cone `t + r = −2u₂`.
    Exterior { u1: f64, u2: f64 },
    /// The solid backward light cone of `(t0, |x0| = r0)` down to `t = 0`.
    BackwardCone { t0: f64, r0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditQuadrature {
    pub order: usize,
    pub panel: f64,
    pub n_s: usize,
    pub interp: Interp,
}

impl Default for AuditQuadrature {
    fn default() -> Self {
        Self {
            order: 8,
            panel: 0.25,
            n_s: 32,
            interp: Interp::Cubic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityAudit {
    /// Outward boundary fluxes, by boundary piece.
    pub boundary: Vec<(&'static str, f64)>,
    pub bulk: f64,
    pub residual: f64,
}

impl IdentityAudit {
    pub fn boundary_total(&self) -> f64 {
        self.boundary.iter().map(|(_, v)| v).sum()
    }
}

/// Integrates the multiplier current over the boundary and its divergence
/// over the interior of `region`.
///
/// The residual is `|Σ boundary − bulk|` divided by the largest single term
/// plus a floor of `10⁻¹⁴·n`, so for `∂_t` on a slab it is the relative energy
/// change between the two slices.
pub fn energy_identity_residual(
    traj: &Trajectory,
    mult: &MultiplierSpec,
    region: Region,
    quad: AuditQuadrature,
) -> Result<IdentityAudit> {
    let model = traj.model;
    let gl = GaussLegendre::new(quad.order);
    let gs = GaussLegendre::new(quad.n_s);
    let cur = |t: f64, r: f64| -> Result<CurrentPoint> {
        let s = traj.sample(t, r, quad.interp)?;
        Ok(current(mult, &model, t, r, &s))
    };
    let rule = |a: f64, b: f64| composite_rule(a, b, quad.panel, &gl);
    let mut boundary = Vec::new();
    let mut bulk = 0.0;
    match region {
        Region::TimeSlab { t1, t2, r_out } => {
            if !(t2 > t1) || !traj.contains(t1, r_out) || !traj.contains(t2, r_out) {
                return Err(outside("time slab outside the trajectory domain"));
            }
            let rs = rule(0.0, r_out);
            let ts = rule(t1, t2);
            let slice = |t: f64| -> Result<f64> {
                let mut s = 0.0;
                for &(r, w) in &rs {
                    s += w * cur(t, r)?.j_t * r * r;
                }
                Ok(FOUR_PI * s)
            };
            boundary.push(("bottom", slice(t1)?));
            boundary.push(("top", -slice(t2)?));
            let mut side = 0.0;
            for &(t, wt) in &ts {
                side += wt * cur(t, r_out)?.j_r;
                for &(r, w) in &rs {
                    bulk += wt * w * cur(t, r)?.div * r * r;
                }
            }
            boundary.push(("outer", FOUR_PI * r_out * r_out * side));
            bulk *= FOUR_PI;
        }
        Region::Exterior { u1, u2 } => {
            let t_top = u1 - u2;
            if !(t_top > 0.0) || u1 > 0.0 {
                return Err(invalid(format!("exterior region needs u2 < u1 <= 0, got ({u1}, {u2})")));
            }
            if !traj.contains(t_top, -2.0 * u2) {
                return Err(outside("exterior region outside the trajectory domain"));
            }
            let mut bottom = 0.0;
            for (r, w) in rule(-2.0 * u1, -2.0 * u2) {
                bottom += w * cur(0.0, r)?.j_t * r * r;
            }
            boundary.push(("initial", FOUR_PI * bottom));
            let (mut out_side, mut in_side) = (0.0, 0.0);
            for (t, wt) in rule(0.0, t_top) {
                let ro = t - 2.0 * u1;
                let c = cur(t, ro)?;
                out_side += wt * (c.j_t + c.j_r) * ro * ro;
                let ri = -2.0 * u2 - t;
                let c = cur(t, ri)?;
                in_side += wt * (c.j_t - c.j_r) * ri * ri;
                for (r, w) in rule(ro, ri) {
                    bulk += wt * w * cur(t, r)?.div * r * r;
                }
            }
            boundary.push(("outgoing", -FOUR_PI * out_side));
            boundary.push(("incoming", -FOUR_PI * in_side));
            bulk *= FOUR_PI;
        }
        Region::BackwardCone { t0, r0 } => {
            if !traj.contains(t0, r0 + t0) || t0 <= 0.0 {
                return Err(outside(format!(
                    "backward cone of ({t0}, {r0}) outside the trajectory domain"
                )));
            }
            if let Variant::CompactCone { big_r, .. } = model.variant {
                if r0 + t0 >= big_r {
                    return Err(outside("backward cone leaves the compact domain"));
                }
            }
            let sphere = |t: f64, rho: f64, lateral: bool| -> Result<(f64, f64)> {
                let (mut flux, mut div) = (0.0, 0.0);
                for (&s, &w) in gs.nodes().iter().zip(gs.weights()) {
                    let pt = crate::geometry::ConePoint::new(t0, r0, rho, s);
                    let c = cur(t, pt.r)?;
                    if lateral {
                        let tau_jr = if pt.r > 0.0 { pt.tau * c.j_r } else { 0.0 };
                        flux += w * (-c.j_t + tau_jr);
                    } else {
                        flux += w * c.j_t;
                        div += w * c.div;
                    }
                }
                Ok((2.0 * PI * flux, 2.0 * PI * div))
            };
            let (mut bottom, mut side) = (0.0, 0.0);
            for (rho, w) in rule(0.0, t0) {
                bottom += w * sphere(0.0, rho, false)?.0 * rho * rho;
                side += w * sphere(t0 - rho, rho, true)?.0 * rho * rho;
            }
            for (t, wt) in rule(0.0, t0) {
                for (rho, w) in rule(0.0, t0 - t) {
                    bulk += wt * w * sphere(t, rho, false)?.1 * rho * rho;
                }
            }
            boundary.push(("initial", bottom));
            boundary.push(("cone", side));
        }
    }
    let total: f64 = boundary.iter().map(|(_, v)| v).sum();
    let scale = boundary.iter().map(|(_, v)| v.abs()).fold(bulk.abs(), f64::max);
    let floor = 1e-14 * traj.grid.n as f64;
    let residual = (total - bulk).abs() / (scale + floor);
    Ok(IdentityAudit {
        boundary,
        bulk,
        residual,
    })
}

/// Cone flux request for [`energy_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApexRequest {
    pub t0: f64,
    pub r0: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReportRequest {
    pub apexes: Vec<ApexRequest>,
    pub outgoing_u: Vec<f64>,
    /// Integrate the hyperboloid flux up to this time.
    pub hyperboloid_extent: Option<f64>,
    pub cone_quadrature: Option<ConeQuadrature>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub energy: f64,
    pub potential: f64,
    pub spacetime_acc: f64,
}

/// Weighted energies and fluxes of a trajectory. All values are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    pub weighted_k0: f64,
    /// `None` when the first-order norm diverges for the data.
    pub weighted_k1: Option<f64>,
    pub cone_flux: Vec<(ApexRequest, f64)>,
    pub outgoing_flux: Vec<(f64, f64)>,
    pub hyperboloid_flux: Option<HyperboloidFlux>,
}

pub fn energy_report(traj: &Trajectory, req: &ReportRequest) -> Result<EnergyReport> {
    let p = traj.model.p;
    let acc = spacetime_accumulator(traj);
    let rows = traj
        .snapshots
        .iter()
        .zip(&acc)
        .map(|(s, &a)| EnergyRow {
            t: s.t,
            energy: conserved_energy(s, p, &traj.grid),
            potential: potential_energy(s, p, &traj.grid),
            spacetime_acc: a,
        })
        .collect();
    let s0 = &traj.snapshots[0];
    let weighted_k0 = weighted_initial_energy(&traj.data, s0, &traj.params, 0, &traj.grid)?;
    let weighted_k1 = weighted_initial_energy(&traj.data, s0, &traj.params, 1, &traj.grid).ok();
    let cq = req.cone_quadrature.unwrap_or_default();
    let cone_flux = req
        .apexes
        .iter()
        .map(|a| Ok((*a, cone_weighted_flux(traj, a.t0, a.r0, a.gamma, cq)?)))
        .collect::<Result<Vec<_>>>()?;
    let outgoing_flux = req
        .outgoing_u
        .iter()
        .map(|&u| Ok((u, outgoing_flux(traj, u, Interp::Linear)?)))
        .collect::<Result<Vec<_>>>()?;
    let hyperboloid_flux = req
        .hyperboloid_extent
        .map(|t| hyperboloid_flux(traj, &HyperboloidSpec::default(), t, Interp::Linear))
        .transpose()?;
    Ok(EnergyReport {
        rows,
        weighted_k0,
        weighted_k1,
        cone_flux,
        outgoing_flux,
        hyperboloid_flux,
    })
}

impl EnergyReport {
    /// Column names: `t, E, E0g, E1g, potential, st_acc`, then one column
    /// per requested flux.
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "E", "E0g", "E1g", "potential", "st_acc"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for (a, _) in &self.cone_flux {
            h.push(format!("cone_t{}_r{}_g{}", a.t0, a.r0, a.gamma));
        }
        for (u, _) in &self.outgoing_flux {
            h.push(format!("outgoing_u{u}"));
        }
        if self.hyperboloid_flux.is_some() {
            h.push("hyperboloid".into());
        }
        h
    }

    /// Writes one row per snapshot; the scalar flux columns repeat on every row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        let e1 = self.weighted_k1.map_or("inf".to_string(), |v| format!("{v:e}"));
        for row in &self.rows {
            let mut rec = vec![
                format!("{:e}", row.t),
                format!("{:e}", row.energy),
                format!("{:e}", self.weighted_k0),
                e1.clone(),
                format!("{:e}", row.potential),
                format!("{:e}", row.spacetime_acc),
            ];
            rec.extend(self.cone_flux.iter().map(|(_, v)| format!("{v:e}")));
            rec.extend(self.outgoing_flux.iter().map(|(_, v)| format!("{v:e}")));
            if let Some(h) = &self.hyperboloid_flux {
                rec.push(format!("{:e}", h.value));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}
