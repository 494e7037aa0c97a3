//! Decay-rate fits, the representation-formula cross-check, the mixed
//! spacetime norm and the scattering threshold.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::energies::radial_integral;
use crate::error::{invalid, Error, Result};
use crate::geometry::{cone_radius, null_weights, PowerParams, Regime};
use crate::profiles::{InitialData, Profile};
use crate::quadrature::{composite_rule, EndpointRefinement, GaussLegendre, RefinedIntegrator};
use crate::solver::{power_nonlinearity, Interp, Trajectory};

/// `α_p = (3 + (p−2)²)/((p+1)(5−p))`.
pub fn alpha_p(p: f64) -> Result<f64> {
    if !(p > 1.0 && p < 5.0) {
        return Err(invalid(format!("alpha_p needs 1 < p < 5, got {p}")));
    }
    Ok((3.0 + (p - 2.0).powi(2)) / ((p + 1.0) * (5.0 - p)))
}

/// `f(p) = p − 2 + (p−1)²(3+(p−2)²)/((5−p)(p+1)) − 1`; scattering in energy
/// space follows from the mixed-norm bound when `f(p) > 0`.
pub fn scattering_f(p: f64) -> f64 {
    p - 2.0 + (p - 1.0).powi(2) * (3.0 + (p - 2.0).powi(2)) / ((5.0 - p) * (p + 1.0)) - 1.0
}

pub const THRESHOLD_TOL: f64 = 1e-8;

/// Root of [`scattering_f`] on `[2, 3]` by bisection to [`THRESHOLD_TOL`].
pub fn scattering_threshold() -> f64 {
    let (mut lo, mut hi) = (2.0, 3.0);
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if scattering_f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Number of sign changes of [`scattering_f`] on a uniform grid of `[2, 3]`.
pub fn threshold_sign_changes(step: f64) -> usize {
    let n = (1.0 / step).round() as usize;
    (0..n)
        .filter(|&k| {
            let a = scattering_f(2.0 + k as f64 * step);
            let b = scattering_f(2.0 + (k + 1) as f64 * step);
            (a < 0.0) != (b < 0.0)
        })
        .count()
}

/// Running `∫₀^t (∫|φ|^{2p} dx)^{1/2} ds`, the `p`-th power of the
/// `L^p_t L^{2p}_x` norm on `[0, t]`, one value per snapshot.
pub fn mixed_norm(traj: &Trajectory) -> Vec<f64> {
    let p = traj.model.p;
    let slices: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| radial_integral(s, &traj.grid, |_, _, phi, _, _| phi.abs().powf(2.0 * p)).sqrt())
        .collect();
    let mut acc = vec![0.0; slices.len()];
    for k in 1..slices.len() {
        let dt = traj.snapshots[k].t - traj.snapshots[k - 1].t;
        acc[k] = acc[k - 1] + 0.5 * dt * (slices[k] + slices[k - 1]);
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringReport {
    pub p_star: f64,
    /// Mixed-norm accumulator at the end of the trajectory, when one is given.
    pub mixed_norm_partial: Option<f64>,
    /// Relative growth of the accumulator over the second half of the run.
    pub late_growth: Option<f64>,
    pub converged: bool,
}

pub fn scattering_report(traj: Option<&Trajectory>) -> ScatteringReport {
    let p_star = scattering_threshold();
    let converged = scattering_f(p_star - THRESHOLD_TOL) < 0.0 && scattering_f(p_star + THRESHOLD_TOL) > 0.0;
    let (mixed_norm_partial, late_growth) = match traj {
        Some(tr) => {
            let acc = mixed_norm(tr);
            let end = *acc.last().expect("trajectory has a snapshot");
            let half = acc[acc.len() / 2];
            let growth = if end > 0.0 { (end - half) / end } else { 0.0 };
            (Some(end), Some(growth))
        }
        None => (None, None),
    };
    ScatteringReport {
        p_star,
        mixed_norm_partial,
        late_growth,
        converged,
    }
}

/// Sampling band for decay fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    /// Fixed radius, `t` varying.
    FixedR(f64),
    /// Fixed `u = (t − r)/2`, moving outward along the cone.
    FixedU(f64),
}

/// Time window and bands; each band is sampled at `per_band` uniformly
/// spaced times in `[t_lo, t_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    pub bands: Vec<Band>,
    pub per_band: usize,
}

impl fmt::Display for FitWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t in [{}, {}], {} per band:", self.t_lo, self.t_hi, self.per_band)?;
        for b in &self.bands {
            match b {
                Band::FixedR(r) => write!(f, " r={r}")?,
                Band::FixedU(u) => write!(f, " u={u}")?,
            }
        }
        Ok(())
    }
}

pub const FIT_FLOOR: f64 = 1e-10;
pub const MIN_FIT_SAMPLES: usize = 50;
pub const UNRELIABLE_RMS: f64 = 0.5;

/// `|φ| ≈ C·v₊^{−a}·u₊^{−b}` fitted in logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub log_c: f64,
    pub a: f64,
    pub b: f64,
    /// Root-mean-square residual of `log|φ|`.
    pub rms: f64,
    pub samples: usize,
    /// `log₁₀(max v₊ / min v₊)` over the used samples.
    pub v_decades: f64,
    pub reliable: bool,
    pub window: String,
}

/// Least-squares fit to `(t, r, |φ|)` samples. Samples below [`FIT_FLOOR`]
/// are dropped.
pub fn fit_decay_samples(samples: &[(f64, f64, f64)], window: &str) -> Result<DecayFit> {
    let mut rows = Vec::new();
    for &(t, r, phi) in samples {
        if phi.abs() < FIT_FLOOR || !phi.is_finite() {
            continue;
        }
        let nw = null_weights(t, r)?;
        rows.push((nw.v_plus.ln(), nw.u_plus.ln(), phi.abs().ln()));
    }
    if rows.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateFit(format!(
            "{} samples above the floor, need {MIN_FIT_SAMPLES}",
            rows.len()
        )));
    }
    let lv_min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let lv_max = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let v_decades = (lv_max - lv_min) / std::f64::consts::LN_10;
    if v_decades < 1.0 {
        return Err(Error::DegenerateFit(format!(
            "samples span {v_decades:.2} decades in v+, need 1"
        )));
    }
    let m = rows.len();
    let design = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => 1.0,
        1 => -rows[i].0,
        _ => -rows[i].1,
    });
    let rhs = DVector::from_iterator(m, rows.iter().map(|r| r.2));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::DegenerateFit("v+ and u+ samples are collinear".into()));
    }
    let x = svd
        .solve(&rhs, 1e-14 * smax)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let resid = &design * &x - &rhs;
    let rms = (resid.norm_squared() / m as f64).sqrt();
    Ok(DecayFit {
        log_c: x[0],
        a: x[1],
        b: x[2],
        rms,
        samples: m,
        v_decades,
        reliable: rms <= UNRELIABLE_RMS,
        window: window.to_string(),
    })
}

/// Samples `(t, r, |φ|)` along the window's bands, skipping points outside
/// the trajectory.
pub fn window_samples(traj: &Trajectory, window: &FitWindow, interp: Interp) -> Result<Vec<(f64, f64, f64)>> {
    if !(window.t_hi > window.t_lo) || window.per_band < 2 {
        return Err(invalid(format!("empty fit window {window}")));
    }
    let mut out = Vec::new();
    for band in &window.bands {
        for k in 0..window.per_band {
            let t = window.t_lo + (window.t_hi - window.t_lo) * k as f64 / (window.per_band - 1) as f64;
            let r = match *band {
                Band::FixedR(r) => r,
                Band::FixedU(u) => t - 2.0 * u,
            };
            if r < 0.0 || !traj.contains(t, r) {
                continue;
            }
            out.push((t, r, traj.phi(t, r, interp)?));
        }
    }
    Ok(out)
}

pub fn fit_decay(traj: &Trajectory, window: &FitWindow) -> Result<DecayFit> {
    let samples = window_samples(traj, window, Interp::Linear)?;
    fit_decay_samples(&samples, &window.to_string())
}

/// Where the fitted samples lie, selecting the subconformal `u₊` exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitRegion {
    Interior,
    Exterior,
}

/// Exponents `(a, b)` of the pointwise bound `v₊^{−a}u₊^{−b}`.
pub fn theory_exponents(params: &PowerParams, region: FitRegion) -> Result<(f64, f64)> {
    let (p, g0) = (params.p(), params.gamma0());
    Ok(match params.regime() {
        Regime::Super => (1.0, 0.5 * (g0 - 1.0)),
        Regime::Sub => {
            let b = match region {
                FitRegion::Interior => g0 / (p + 1.0),
                FitRegion::Exterior => (p - 1.0) * g0 / (p + 1.0),
            };
            (alpha_p(p)? * g0, b)
        }
    })
}

/// Signed deviations `(a − a_theory, b − b_theory)`; fails on unreliable fits.
pub fn theorem_compare(fit: &DecayFit, params: &PowerParams, region: FitRegion) -> Result<(f64, f64)> {
    if !fit.reliable {
        return Err(Error::DegenerateFit(format!(
            "fit is unreliable: rms log residual {:.3}",
            fit.rms
        )));
    }
    let (a, b) = theory_exponents(params, region)?;
    Ok((fit.a - a, fit.b - b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationOptions {
    pub order: usize,
    pub panel: f64,
    pub n_s: usize,
    pub interp: Interp,
}

impl Default for RepresentationOptions {
    fn default() -> Self {
        Self {
            order: 8,
            panel: 0.25,
            n_s: 48,
            interp: Interp::Cubic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationCheck {
    pub reconstructed: f64,
    pub solver: f64,
    /// `|reconstructed − solver| / max(|solver|, 10⁻⁸)`.
    pub discrepancy: f64,
    pub linear_part: f64,
    pub nonlinear_part: f64,
}

/// `2π∫_{−1}^{1} f(|x0 + t0ω|) ds` and its derivative in `t0`.
fn spherical_mean(f: &Profile, t0: f64, r0: f64) -> Result<(f64, f64)> {
    if t0 == 0.0 || f.is_zero() {
        return Ok((4.0 * PI * f.value(r0) * if t0 == 0.0 { 1.0 } else { 0.0 }, 0.0));
    }
    let integ = RefinedIntegrator::new(EndpointRefinement {
        order: 32,
        levels: 8,
        ..Default::default()
    });
    let rho = |s: f64| cone_radius(r0, t0, s);
    // Split where the sphere crosses a kink of a piecewise profile.
    let mut breaks = vec![-1.0];
    if let Profile::Bump { inner, outer, .. } = *f {
        for k in [inner, outer] {
            let s = (r0 * r0 + t0 * t0 - k * k) / (2.0 * r0 * t0);
            if s > -1.0 && s < 1.0 {
                breaks.push(s);
            }
        }
    }
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    let (mut m, mut dm) = (0.0, 0.0);
    for w in breaks.windows(2) {
        m += integ.integrate(|s| f.value(rho(s)), w[0], w[1])?.value;
        dm += integ
            .integrate(
                |s| {
                    let r = rho(s);
                    if r > 0.0 {
                        f.derivative(r) * (t0 - r0 * s) / r
                    } else {
                        0.0
                    }
                },
                w[0],
                w[1],
            )?
            .value;
    }
    Ok((2.0 * PI * m, 2.0 * PI * dm))
}

/// Linear part `(t0·M[φ₁] + ∂_{t0}(t0·M[φ₀]))/4π` of the representation
/// formula, with `M` the integral over the unit sphere.
pub fn free_wave_value(data: &InitialData, t0: f64, r0: f64) -> Result<f64> {
    let (m1, _) = spherical_mean(&data.velocity, t0, r0)?;
    let (m0, dm0) = spherical_mean(&data.position, t0, r0)?;
    Ok((t0 * m1 + m0 + t0 * dm0) / (4.0 * PI))
}

/// Rebuilds `φ(t0, r0)` from the data and the solution on the backward cone:
/// `4πφ(q) = ∫t0φ₁dω̃ + ∂_{t0}∫t0φ₀dω̃ − ∫_{𝒩⁻(q)} κ|φ|^{p−1}φ r̃dr̃dω̃`.
pub fn representation_check(
    traj: &Trajectory,
    t0: f64,
    r0: f64,
    opts: RepresentationOptions,
) -> Result<RepresentationCheck> {
    if !traj.contains(t0, r0 + t0) {
        return Err(crate::error::outside(format!(
            "backward cone of ({t0}, {r0}) leaves the trajectory"
        )));
    }
    let linear_part = free_wave_value(&traj.data, t0, r0)?;
    let model = traj.model;
    let mut cone = 0.0;
    if model.nonlinear && t0 > 0.0 {
        let gl = GaussLegendre::new(opts.order);
        let gs = GaussLegendre::new(opts.n_s);
        for (rt, w) in composite_rule(0.0, t0, opts.panel, &gl) {
            let t = t0 - rt;
            let mut sphere = 0.0;
            for (&s, &ws) in gs.nodes().iter().zip(gs.weights()) {
                let r = cone_radius(r0, rt, s);
                let phi = traj.phi(t, r, opts.interp)?;
                sphere += ws * model.coefficient(t, r) * power_nonlinearity(phi, model.p);
            }
            cone += w * rt * 2.0 * PI * sphere;
        }
    }
    let nonlinear_part = -cone / (4.0 * PI);
    let reconstructed = linear_part + nonlinear_part;
    let solver = traj.phi(t0, r0, opts.interp)?;
    Ok(RepresentationCheck {
        reconstructed,
        solver,
        discrepancy: (reconstructed - solver).abs() / solver.abs().max(1e-8),
        linear_part,
        nonlinear_part,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{dalembert_linear, simulate, Model, RadialGrid};
    use approx::assert_relative_eq;

    #[test]
    fn alpha_p_values() {
        assert_relative_eq!(alpha_p(3.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(alpha_p(2.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(alpha_p(2.5).unwrap() * 1.4, 0.52, epsilon = 1e-12);
        assert!(alpha_p(5.0 - 1e-9).unwrap() > 1e7);
        assert!(alpha_p(5.0).is_err() && alpha_p(1.0).is_err());
    }

    #[test]
    fn threshold_bracket_and_sign_values() {
        assert_relative_eq!(scattering_f(2.0), -2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(scattering_f(3.0), 2.0, epsilon = 1e-15);
        let p = scattering_threshold();
        assert!(2.3541 < p && p < 2.3542, "{p}");
        assert!(scattering_f(p).abs() < 1e-7);
        assert_eq!(threshold_sign_changes(1e-3), 1);
        let mut prev = scattering_f(2.2);
        for k in 1..=300 {
            let v = scattering_f(2.2 + k as f64 * 1e-3);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn fit_recovers_manufactured_field() {
        let mut samples = Vec::new();
        for k in 0..40 {
            let t = 10.0 + 2.0 * k as f64;
            for r in [0.0, 3.0, t + 2.0, t + 10.0] {
                let nw = null_weights(t, r).unwrap();
                samples.push((t, r, 3.0 * nw.v_plus.powf(-1.0) * nw.u_plus.powf(-0.25)));
            }
        }
        let fit = fit_decay_samples(&samples, "manufactured").unwrap();
        assert!((fit.a - 1.0).abs() < 1e-6 && (fit.b - 0.25).abs() < 1e-6);
        assert!((fit.log_c - 3f64.ln()).abs() < 1e-6);
        assert!(fit.reliable && fit.rms < 1e-9);
    }

    #[test]
    fn fit_rejects_thin_or_short_windows() {
        let few: Vec<_> = (0..10).map(|k| (10.0 + k as f64, 1.0, 0.1)).collect();
        assert!(matches!(fit_decay_samples(&few, ""), Err(Error::DegenerateFit(_))));
        let narrow: Vec<_> = (0..60).map(|k| (10.0 + 0.1 * k as f64, (k % 3) as f64, 0.1)).collect();
        assert!(matches!(fit_decay_samples(&narrow, ""), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn noisy_fit_is_flagged() {
        let mut samples = Vec::new();
        for k in 0..100 {
            let t = 5.0 + k as f64;
            let noise = if k % 2 == 0 { 10.0 } else { 0.1 };
            samples.push((t, 1.0, noise / t));
            samples.push((t, t + 4.0, noise / t));
        }
        let fit = fit_decay_samples(&samples, "").unwrap();
        assert!(!fit.reliable);
        let params = PowerParams::new(4.0, 1.5, 0.01).unwrap();
        assert!(theorem_compare(&fit, &params, FitRegion::Interior).is_err());
    }

    #[test]
    fn theory_exponents_by_regime() {
        let sup = PowerParams::new(4.0, 1.5, 0.01).unwrap();
        assert_eq!(theory_exponents(&sup, FitRegion::Interior).unwrap(), (1.0, 0.25));
        let sub = PowerParams::new(2.5, 1.4, 0.01).unwrap();
        let (a, b) = theory_exponents(&sub, FitRegion::Exterior).unwrap();
        assert_relative_eq!(a, 0.52, epsilon = 1e-12);
        assert_relative_eq!(b, 1.5 * 1.4 / 3.5, epsilon = 1e-12);
    }

    fn run(data: InitialData, nonlinear: bool, dr_inv: usize, t_end: f64) -> Trajectory {
        let params = PowerParams::new(3.0, 1.5, 0.01).unwrap();
        let model = if nonlinear {
            Model::full_space(&params)
        } else {
            Model::linear(&params)
        };
        let g = RadialGrid::with_spacing(16.0, 1.0 / dr_inv as f64, 0.5).unwrap();
        simulate(&data, t_end, 4.0 * g.dt, &model, &params, &g).unwrap()
    }

    #[test]
    fn representation_of_zero_data() {
        let tr = run(InitialData::zero(), true, 8, 3.0);
        let c = representation_check(&tr, 3.0, 1.0, RepresentationOptions::default()).unwrap();
        assert_eq!((c.reconstructed, c.solver), (0.0, 0.0));
    }

    #[test]
    fn free_part_matches_exact_linear_solution() {
        let data = InitialData::new(
            Profile::gaussian(1.0, 1.0).unwrap(),
            Profile::bump(0.7, 0.5, 2.0).unwrap(),
        );
        for &(t0, r0) in &[(1.0, 0.5), (2.0, 2.0), (3.0, 0.0), (0.5, 4.0)] {
            let want = dalembert_linear(&data, t0, r0);
            assert_relative_eq!(
                free_wave_value(&data, t0, r0).unwrap(),
                want,
                epsilon = 1e-9,
                max_relative = 1e-8
            );
        }
        let tr = run(data, false, 16, 3.0);
        let c = representation_check(&tr, 3.0, 1.0, RepresentationOptions::default()).unwrap();
        assert_eq!(c.nonlinear_part, 0.0);
        assert_relative_eq!(c.reconstructed, dalembert_linear(&data, 3.0, 1.0), epsilon = 1e-9);
    }

    #[test]
    fn mixed_norm_is_monotone_and_zero_for_zero_data() {
        assert!(mixed_norm(&run(InitialData::zero(), true, 8, 2.0))
            .iter()
            .all(|v| *v == 0.0));
        let acc = mixed_norm(&run(
            InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap()),
            true,
            8,
            4.0,
        ));
        assert!(acc.windows(2).all(|w| w[1] >= w[0]) && acc[acc.len() - 1] > 0.0);
    }
}
