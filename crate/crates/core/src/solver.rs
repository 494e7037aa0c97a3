//! Explicit Störmer–Verlet evolution of the radial equation
//! `∂_t²ψ = ∂_r²ψ − r·κ(t,r)·|ψ/r|^{p−1}(ψ/r)` for `ψ = r·φ`.
//!
//! `κ ≡ 1` on full space; on the compact cone of height `R`,
//! `κ = Λ^{3−p}` with `Λ = ((R − t)² − r²)^{-1}`.

use crate::error::{invalid, Error, Result};
use crate::geometry::{CompactConeWeights, PowerParams};
use crate::profiles::InitialData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n: usize,
    pub dr: f64,
    pub dt: f64,
    pub cfl: f64,
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize, cfl: f64) -> Result<Self> {
        if n < 16 {
            return Err(invalid(format!("grid needs at least 16 cells, got {n}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(invalid(format!("r_max must be positive, got {r_max}")));
        }
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(invalid(format!("cfl must lie in (0, 1], got {cfl}")));
        }
        let dr = r_max / n as f64;
        Ok(Self {
            r_max,
            n,
            dr,
            dt: cfl * dr,
            cfl,
        })
    }

    /// Grid with spacing as close to `dr` as an integer cell count allows.
    pub fn with_spacing(r_max: f64, dr: f64, cfl: f64) -> Result<Self> {
        if !(dr > 0.0) {
            return Err(invalid(format!("dr must be positive, got {dr}")));
        }
        Self::new(r_max, (r_max / dr).round() as usize, cfl)
    }

    /// `k` times as many cells on the same domain and CFL number.
    pub fn refined(&self, k: usize) -> Result<Self> {
        Self::new(self.r_max, self.n * k, self.cfl)
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    /// Requires `r_max ≥ r_obs + t + r_supp`, so the outflow boundary cannot
    /// influence observations.
    pub fn check_guard(&self, r_obs: f64, t: f64, r_supp: f64) -> Result<()> {
        let need = r_obs + t + r_supp;
        if self.r_max + 1e-12 * need < need {
            return Err(invalid(format!(
                "r_max = {} is below r_obs + T + r_supp = {need}",
                self.r_max
            )));
        }
        Ok(())
    }
}

/// `ψ = r·φ` and `∂_tψ` on the nodes `r_i = i·dr`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FieldState {
    pub fn zero(grid: &RadialGrid) -> Self {
        Self {
            t: 0.0,
            psi: vec![0.0; grid.n + 1],
            pi: vec![0.0; grid.n + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn negated(&self) -> Self {
        Self {
            t: self.t,
            psi: self.psi.iter().map(|x| -x).collect(),
            pi: self.pi.iter().map(|x| -x).collect(),
        }
    }

    /// `φ` at node `i`; at the origin from `(8ψ₁ − ψ₂)/(6·dr)`, exact for odd
    /// cubics.
    pub fn phi(&self, i: usize, dr: f64) -> f64 {
        recover(&self.psi, i, dr)
    }

    pub fn phi_t(&self, i: usize, dr: f64) -> f64 {
        recover(&self.pi, i, dr)
    }

    /// Centered difference of nodal `φ`; zero at the origin, one-sided
    /// second order at the outer node.
    pub fn phi_r(&self, i: usize, dr: f64) -> f64 {
        let n = self.n();
        if i == 0 {
            0.0
        } else if i == n {
            (3.0 * self.phi(n, dr) - 4.0 * self.phi(n - 1, dr) + self.phi(n - 2, dr)) / (2.0 * dr)
        } else {
            (self.phi(i + 1, dr) - self.phi(i - 1, dr)) / (2.0 * dr)
        }
    }

    pub fn phi_nodes(&self, dr: f64) -> Vec<f64> {
        (0..=self.n()).map(|i| self.phi(i, dr)).collect()
    }

    pub fn phi_t_nodes(&self, dr: f64) -> Vec<f64> {
        (0..=self.n()).map(|i| self.phi_t(i, dr)).collect()
    }

    /// `∂_rφ` at every node from a precomputed `φ` array.
    pub fn phi_r_nodes(phi: &[f64], dr: f64) -> Vec<f64> {
        let n = phi.len() - 1;
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            out[i] = (phi[i + 1] - phi[i - 1]) / (2.0 * dr);
        }
        out[n] = (3.0 * phi[n] - 4.0 * phi[n - 1] + phi[n - 2]) / (2.0 * dr);
        out
    }
}

fn recover(v: &[f64], i: usize, dr: f64) -> f64 {
    if i == 0 {
        (8.0 * v[1] - v[2]) / (6.0 * dr)
    } else {
        v[i] / (i as f64 * dr)
    }
}

/// Samples `r·φ₀` and `r·φ₁` on the grid.
pub fn init_state(data: &InitialData, grid: &RadialGrid) -> FieldState {
    let mut s = FieldState::zero(grid);
    for i in 1..=grid.n {
        let r = grid.radius(i);
        s.psi[i] = r * data.position.value(r);
        s.pi[i] = r * data.velocity.value(r);
    }
    s
}

/// [`init_state`] that rejects tail profiles too slowly decaying for the
/// first-order weighted norm, `q ≤ (γ₀ + 3)/2`.
pub fn init_state_for_weighted_norm(data: &InitialData, grid: &RadialGrid, params: &PowerParams) -> Result<FieldState> {
    if let Some(q) = data.tail_rate() {
        let limit = (params.gamma0() + 3.0) / 2.0;
        if q <= limit {
            return Err(Error::Divergent(format!(
                "tail rate q = {q} does not exceed (gamma0 + 3)/2 = {limit}"
            )));
        }
    }
    Ok(init_state(data, grid))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    FullSpace,
    /// Inside the forward domain of dependence of the ball of radius `big_r`.
    /// Steps fail once the coefficient `Λ^{3−p}` exceeds `ceiling` on the
    /// active window.
    CompactCone {
        big_r: f64,
        ceiling: f64,
    },
}

/// Which equation a trajectory solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub p: f64,
    pub nonlinear: bool,
    pub variant: Variant,
}

pub const DEFAULT_CEILING: f64 = 1e8;

impl Model {
    pub fn full_space(params: &PowerParams) -> Self {
        Self {
            p: params.p(),
            nonlinear: true,
            variant: Variant::FullSpace,
        }
    }

    /// Free wave equation; `p` is kept only for diagnostics.
    pub fn linear(params: &PowerParams) -> Self {
        Self {
            p: params.p(),
            nonlinear: false,
            variant: Variant::FullSpace,
        }
    }

    pub fn compact(params: &PowerParams, big_r: f64) -> Self {
        Self {
            p: params.p(),
            nonlinear: true,
            variant: Variant::CompactCone {
                big_r,
                ceiling: DEFAULT_CEILING,
            },
        }
    }

    /// Coefficient `κ(t, r)` of the nonlinearity.
    pub fn coefficient(&self, t: f64, r: f64) -> f64 {
        match self.variant {
            Variant::FullSpace => 1.0,
            Variant::CompactCone { big_r, .. } => {
                compact_coefficient(self.p, CompactConeWeights::new(big_r, t, r).lambda_cc)
            }
        }
    }

    /// Number of the last node updated by a step ending at `t_new`.
    fn active_end(&self, n: usize, dr: f64, t_new: f64) -> usize {
        match self.variant {
            Variant::FullSpace => n,
            Variant::CompactCone { big_r, .. } => {
                let edge = big_r - t_new - 0.5 * dr;
                if edge < 0.0 {
                    0
                } else {
                    ((edge / dr).floor() as usize).min(n)
                }
            }
        }
    }
}

fn compact_coefficient(p: f64, lambda: f64) -> f64 {
    if p == 3.0 {
        1.0
    } else {
        lambda.powf(3.0 - p)
    }
}

/// `|φ|^{p−1}φ` with fast paths for integer powers.
#[inline]
pub fn power_nonlinearity(phi: f64, p: f64) -> f64 {
    if p == 3.0 {
        phi * phi * phi
    } else if p == 4.0 {
        phi * phi * phi * phi.abs()
    } else if p == 2.0 {
        phi * phi.abs()
    } else {
        phi.abs().powf(p - 1.0) * phi
    }
}

/// Acceleration `∂_t²ψ` at nodes `1..=last` (clamped to `n − 1`); entries
/// beyond are left untouched.
fn acceleration(model: &Model, dr: f64, t: f64, psi: &[f64], last: usize, out: &mut [f64]) -> Result<()> {
    let n = psi.len() - 1;
    let last = last.min(n - 1);
    let inv = 1.0 / (dr * dr);
    out[0] = 0.0;
    let mut ok = true;
    match (model.nonlinear, model.variant) {
        (false, _) => {
            for i in 1..=last {
                out[i] = (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) * inv;
            }
        }
        (true, Variant::FullSpace) => {
            for i in 1..=last {
                let r = i as f64 * dr;
                let a = (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) * inv - r * power_nonlinearity(psi[i] / r, model.p);
                ok &= a.is_finite();
                out[i] = a;
            }
        }
        (true, Variant::CompactCone { big_r, ceiling }) => {
            for i in 1..=last {
                let r = i as f64 * dr;
                let k = compact_coefficient(model.p, CompactConeWeights::new(big_r, t, r).lambda_cc);
                if !(k <= ceiling) {
                    return Err(Error::CeilingExceeded { t, coefficient: k });
                }
                let a =
                    (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) * inv - r * k * power_nonlinearity(psi[i] / r, model.p);
                ok &= a.is_finite();
                out[i] = a;
            }
        }
    }
    if ok {
        Ok(())
    } else {
        let node = out[..=last].iter().position(|a| !a.is_finite()).unwrap_or(0);
        Err(Error::BlowUp { t, node })
    }
}

/// Stepper that carries the acceleration between steps; each step costs one
/// acceleration evaluation and reproduces [`step_model`] exactly.
#[derive(Debug, Clone)]
pub struct Integrator {
    model: Model,
    grid: RadialGrid,
    state: FieldState,
    accel: Vec<f64>,
    accel_end: usize,
}

impl Integrator {
    pub fn new(state: FieldState, model: Model, grid: RadialGrid) -> Result<Self> {
        if state.psi.len() != grid.n + 1 || state.pi.len() != grid.n + 1 {
            return Err(invalid("state size does not match grid"));
        }
        let mut accel = vec![0.0; grid.n + 1];
        let accel_end = model.active_end(grid.n, grid.dr, state.t);
        acceleration(&model, grid.dr, state.t, &state.psi, accel_end, &mut accel)?;
        Ok(Self {
            model,
            grid,
            state,
            accel,
            accel_end,
        })
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn into_state(self) -> FieldState {
        self.state
    }

    /// One kick–drift–kick step of length `h ≤ dt`.
    pub fn advance(&mut self, h: f64) -> Result<()> {
        let n = self.grid.n;
        let dr = self.grid.dr;
        let t_new = self.state.t + h;
        let m = self.model.active_end(n, dr, t_new).min(self.accel_end);
        let upto = m.min(n - 1);
        let s = &mut self.state;
        let old_outer = (s.psi[n], s.psi[n - 1]);
        for i in 1..=upto {
            s.pi[i] += 0.5 * h * self.accel[i];
            s.psi[i] += h * s.pi[i];
        }
        if m == n {
            let c = h / dr;
            let next = old_outer.0 - c * (old_outer.0 - old_outer.1);
            s.pi[n] = (next - old_outer.0) / h;
            s.psi[n] = next;
        }
        acceleration(&self.model, dr, t_new, &s.psi, upto, &mut self.accel)?;
        for i in 1..=upto {
            s.pi[i] += 0.5 * h * self.accel[i];
        }
        s.t = t_new;
        self.accel_end = m;
        Ok(())
    }
}

pub fn step_model(state: &FieldState, model: &Model, grid: &RadialGrid) -> Result<FieldState> {
    let mut it = Integrator::new(state.clone(), *model, *grid)?;
    it.advance(grid.dt)?;
    Ok(it.into_state())
}

/// One step of the full-space nonlinear equation.
pub fn step(state: &FieldState, params: &PowerParams, grid: &RadialGrid) -> Result<FieldState> {
    step_model(state, &Model::full_space(params), grid)
}

/// One step of the free wave equation.
pub fn step_linear(state: &FieldState, grid: &RadialGrid) -> Result<FieldState> {
    let model = Model {
        p: 3.0,
        nonlinear: false,
        variant: Variant::FullSpace,
    };
    step_model(state, &model, grid)
}

/// One step of the compact-cone equation of height `big_r`. Nodes with
/// `r > R − t − dr/2` after the step are left frozen.
pub fn step_compact(
    state: &FieldState,
    params: &PowerParams,
    big_r: f64,
    ceiling: f64,
    grid: &RadialGrid,
) -> Result<FieldState> {
    let model = Model {
        p: params.p(),
        nonlinear: true,
        variant: Variant::CompactCone { big_r, ceiling },
    };
    step_model(state, &model, grid)
}

/// Snapshot times `0, c, 2c, …` below `t_end`, then `t_end`.
pub fn snapshot_times(t0: f64, t_end: f64, cadence: f64) -> Vec<f64> {
    let mut times = vec![t0];
    if t_end <= t0 {
        return times;
    }
    let mut k = 1u64;
    loop {
        let t = t0 + k as f64 * cadence;
        if t >= t_end - 1e-9 * cadence {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_end);
    times
}

/// How an evolution ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOutcome {
    pub reached: f64,
    /// Set when the compact-cone ceiling stopped the run early.
    pub truncated: bool,
}

/// Evolves to `t_end`, handing each snapshot to `observe` without storing it.
pub fn evolve_with<F: FnMut(&FieldState) -> Result<()>>(
    state0: FieldState,
    t_end: f64,
    cadence: f64,
    model: &Model,
    grid: &RadialGrid,
    mut observe: F,
) -> Result<EvolveOutcome> {
    if !(t_end >= state0.t) {
        return Err(invalid(format!(
            "final time {t_end} precedes the initial time {}",
            state0.t
        )));
    }
    if !(cadence > 0.0) {
        return Err(invalid(format!("snapshot cadence must be positive, got {cadence}")));
    }
    if let Variant::CompactCone { big_r, .. } = model.variant {
        if t_end >= big_r {
            return Err(invalid(format!("compact-cone run must end before R = {big_r}")));
        }
    }
    let times = snapshot_times(state0.t, t_end, cadence);
    let mut it = Integrator::new(state0, *model, *grid)?;
    observe(it.state())?;
    for &target in &times[1..] {
        let remaining = target - it.state().t;
        let steps = ((remaining / grid.dt) - 1e-6).ceil().max(1.0) as u64;
        for k in 0..steps {
            let h = if k + 1 == steps { target - it.state().t } else { grid.dt };
            match it.advance(h) {
                Ok(()) => {}
                Err(Error::CeilingExceeded { .. }) => {
                    return Ok(EvolveOutcome {
                        reached: it.state().t,
                        truncated: true,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        it.state.t = target;
        observe(it.state())?;
    }
    Ok(EvolveOutcome {
        reached: t_end,
        truncated: false,
    })
}

/// Interpolation order used when sampling a trajectory off the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    /// Linear in `t` and `r`.
    #[default]
    Linear,
    /// Four-point Lagrange in `t` and `r`.
    Cubic,
}

/// `φ`, `∂_tφ`, `∂_rφ` at a spacetime point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample {
    pub phi: f64,
    pub phi_t: f64,
    pub phi_r: f64,
}

impl FieldSample {
    fn axpy(&mut self, w: f64, o: &FieldSample) {
        self.phi += w * o.phi;
        self.phi_t += w * o.phi_t;
        self.phi_r += w * o.phi_r;
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: RadialGrid,
    pub params: PowerParams,
    pub model: Model,
    pub data: InitialData,
    pub snapshots: Vec<FieldState>,
    /// `Some(t)` when the run stopped early at `t`.
    pub truncated_at: Option<f64>,
    pub scheme_order: u32,
}

/// Evolves and stores every snapshot.
pub fn evolve(
    state0: FieldState,
    t_end: f64,
    cadence: f64,
    model: &Model,
    params: &PowerParams,
    grid: &RadialGrid,
    data: InitialData,
) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    let outcome = evolve_with(state0, t_end, cadence, model, grid, |s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        grid: *grid,
        params: *params,
        model: *model,
        data,
        snapshots,
        truncated_at: outcome.truncated.then_some(outcome.reached),
        scheme_order: 2,
    })
}

/// Initializes from `data` and evolves.
pub fn simulate(
    data: &InitialData,
    t_end: f64,
    cadence: f64,
    model: &Model,
    params: &PowerParams,
    grid: &RadialGrid,
) -> Result<Trajectory> {
    evolve(init_state(data, grid), t_end, cadence, model, params, grid, *data)
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.snapshots[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.snapshots[self.snapshots.len() - 1].t
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn contains(&self, t: f64, r: f64) -> bool {
        let eps = 1e-12 * self.t_end().abs().max(1.0);
        t >= self.t_start() - eps && t <= self.t_end() + eps && r >= 0.0 && r <= self.grid.r_max
    }

    fn node_sample(&self, snap: &FieldState, j: isize) -> FieldSample {
        let dr = self.grid.dr;
        let (i, sign) = if j < 0 {
            ((-j) as usize, -1.0)
        } else {
            (j as usize, 1.0)
        };
        let i = i.min(self.grid.n);
        FieldSample {
            phi: snap.phi(i, dr),
            phi_t: snap.phi_t(i, dr),
            phi_r: sign * snap.phi_r(i, dr),
        }
    }

    fn radial(&self, snap: &FieldState, r: f64, interp: Interp) -> FieldSample {
        let dr = self.grid.dr;
        let n = self.grid.n;
        let x = r / dr;
        let mut out = FieldSample::default();
        match interp {
            Interp::Linear => {
                let i = (x.floor() as usize).min(n - 1);
                let f = x - i as f64;
                out.axpy(1.0 - f, &self.node_sample(snap, i as isize));
                out.axpy(f, &self.node_sample(snap, i as isize + 1));
            }
            Interp::Cubic => {
                // Stencil i−1..i+2, shifted inward at the outer edge; negative
                // indices use the even reflection of φ.
                let i = (x.floor() as isize).clamp(0, n as isize - 2);
                let f = x - i as f64;
                let w = lagrange4_uniform(f);
                for (k, wk) in w.iter().enumerate() {
                    out.axpy(*wk, &self.node_sample(snap, i - 1 + k as isize));
                }
            }
        }
        out
    }

    /// Interpolated `φ`, `∂_tφ`, `∂_rφ`.
    pub fn sample(&self, t: f64, r: f64, interp: Interp) -> Result<FieldSample> {
        if !self.contains(t, r) {
            return Err(crate::error::outside(format!(
                "({t}, {r}) lies outside the trajectory [{}, {}] x [0, {}]",
                self.t_start(),
                self.t_end(),
                self.grid.r_max
            )));
        }
        let snaps = &self.snapshots;
        if snaps.len() == 1 {
            return Ok(self.radial(&snaps[0], r, interp));
        }
        let k = snaps.partition_point(|s| s.t <= t).clamp(1, snaps.len() - 1) - 1;
        let mut out = FieldSample::default();
        match interp {
            Interp::Linear => {
                let (a, b) = (&snaps[k], &snaps[k + 1]);
                let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
                out.axpy(1.0 - f, &self.radial(a, r, interp));
                out.axpy(f, &self.radial(b, r, interp));
            }
            Interp::Cubic => {
                if snaps.len() < 4 {
                    return self.sample(t, r, Interp::Linear);
                }
                let lo = (k as isize - 1).clamp(0, snaps.len() as isize - 4) as usize;
                let ts = [snaps[lo].t, snaps[lo + 1].t, snaps[lo + 2].t, snaps[lo + 3].t];
                let w = lagrange4(&ts, t);
                for (j, wj) in w.iter().enumerate() {
                    out.axpy(*wj, &self.radial(&snaps[lo + j], r, interp));
                }
            }
        }
        Ok(out)
    }

    pub fn phi(&self, t: f64, r: f64, interp: Interp) -> Result<f64> {
        Ok(self.sample(t, r, interp)?.phi)
    }
}

/// Lagrange weights on nodes −1, 0, 1, 2 at `x`.
pub(crate) fn lagrange4_uniform(x: f64) -> [f64; 4] {
    [
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ]
}

pub(crate) fn lagrange4(nodes: &[f64; 4], x: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for j in 0..4 {
        for m in 0..4 {
            if m != j {
                w[j] *= (x - nodes[m]) / (nodes[j] - nodes[m]);
            }
        }
    }
    w
}

/// Exact solution of the free radial wave equation with data `(φ₀, φ₁)`.
///
/// Writes `ψ = ½[H(t + r) − H(t − r)]` with `H = ψ̄₀ + G`, where `ψ̄₀` is the
/// odd extension of `r·φ₀` and `G` the even antiderivative of `r·φ₁`.
pub fn dalembert_linear(data: &InitialData, t: f64, r: f64) -> f64 {
    let h = |x: f64| x * data.position.value(x) + data.velocity.first_moment(x);
    if r < 1e-6 {
        let d0 = data.position.value(t) + t * data.position.derivative(t.abs());
        return d0 + t * data.velocity.value(t);
    }
    (h(t + r) - h(t - r)) / (2.0 * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Profile;
    use approx::assert_relative_eq;

    fn params3() -> PowerParams {
        PowerParams::new(3.0, 1.5, 0.01).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(RadialGrid::new(10.0, 8, 0.5).is_err());
        assert!(RadialGrid::new(10.0, 64, 1.5).is_err());
        let g = RadialGrid::with_spacing(64.0, 1.0 / 256.0, 0.5).unwrap();
        assert_eq!(g.n, 16384);
        assert_relative_eq!(g.dt, 1.0 / 512.0);
        assert!(g.check_guard(18.0, 40.0, 6.0).is_ok());
        assert!(g.check_guard(19.0, 40.0, 6.0).is_err());
    }

    #[test]
    fn init_examples() {
        let g = RadialGrid::new(8.0, 64, 0.5).unwrap();
        let z = init_state(&InitialData::at_rest(Profile::gaussian(0.0, 1.0).unwrap()), &g);
        assert!(z.psi.iter().chain(&z.pi).all(|&x| x == 0.0));
        let s = init_state(&InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap()), &g);
        for i in 0..=g.n {
            let r = g.radius(i);
            assert_eq!(s.psi[i], r * (-r * r).exp());
        }
        assert_eq!(s.psi[0], 0.0);
        let b = init_state(&InitialData::at_rest(Profile::bump(1.0, 1.0, 2.0).unwrap()), &g);
        for i in 0..=g.n {
            let r = g.radius(i);
            if r <= 1.0 || r >= 2.0 {
                assert_eq!(b.psi[i], 0.0);
            }
        }
    }

    #[test]
    fn tail_rejected_for_weighted_norm() {
        let g = RadialGrid::new(8.0, 64, 0.5).unwrap();
        let p = params3();
        let slow = InitialData::at_rest(Profile::tail(1.0, 2.0).unwrap());
        assert!(matches!(
            init_state_for_weighted_norm(&slow, &g, &p),
            Err(Error::Divergent(_))
        ));
        let fast = InitialData::at_rest(Profile::tail(1.0, 2.5).unwrap());
        assert!(init_state_for_weighted_norm(&fast, &g, &p).is_ok());
    }

    #[test]
    fn origin_extrapolation_is_exact_for_odd_cubics() {
        let g = RadialGrid::new(1.0, 16, 0.5).unwrap();
        let mut s = FieldState::zero(&g);
        for i in 0..=g.n {
            let r = g.radius(i);
            s.psi[i] = 2.0 * r - 3.0 * r * r * r;
        }
        assert_relative_eq!(s.phi(0, g.dr), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = RadialGrid::new(8.0, 64, 0.5).unwrap();
        let z = FieldState::zero(&g);
        let s = step(&z, &params3(), &g).unwrap();
        assert!(s.psi.iter().chain(&s.pi).all(|&x| x == 0.0));
        let c = step_compact(&z, &params3(), 10.0, DEFAULT_CEILING, &g).unwrap();
        assert!(c.psi.iter().chain(&c.pi).all(|&x| x == 0.0));
    }

    #[test]
    fn standing_wave_matches_separated_solution() {
        // ψ = sin(kr) vanishes at r = 0; compared away from the outer
        // boundary, which cannot influence r ≤ r_max − t.
        let k = 3.0;
        let r_max = 4.0 * std::f64::consts::PI;
        let mut errs = Vec::new();
        for n in [512usize, 1024] {
            let g = RadialGrid::new(r_max, n, 0.5).unwrap();
            let model = Model {
                p: 3.0,
                nonlinear: false,
                variant: Variant::FullSpace,
            };
            let mut s = FieldState::zero(&g);
            for i in 0..=n {
                s.psi[i] = (k * g.radius(i)).sin();
            }
            let t = 2.0;
            let mut last = None;
            evolve_with(s, t, t, &model, &g, |st| {
                last = Some(st.clone());
                Ok(())
            })
            .unwrap();
            let st = last.unwrap();
            let err = (1..n / 2)
                .map(|i| (st.psi[i] - (k * t).cos() * (k * g.radius(i)).sin()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 2e-3, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn integrator_matches_pure_step() {
        let g = RadialGrid::new(10.0, 64, 0.5).unwrap();
        let data = InitialData::at_rest(Profile::gaussian(1.5, 1.0).unwrap());
        let p = PowerParams::new(2.5, 1.3, 0.01).unwrap();
        for model in [Model::full_space(&p), Model::compact(&p, 5.0)] {
            let mut pure = init_state(&data, &g);
            let mut it = Integrator::new(pure.clone(), model, g).unwrap();
            for _ in 0..40 {
                pure = step_model(&pure, &model, &g).unwrap();
                it.advance(g.dt).unwrap();
            }
            assert_eq!(&pure, it.state());
        }
    }

    #[test]
    fn compact_with_conformal_power_matches_full_space_inside_cone() {
        let g = RadialGrid::new(10.0, 128, 0.5).unwrap();
        let data = InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap());
        let p = params3();
        let s0 = init_state(&data, &g);
        let mut a = s0.clone();
        let mut b = s0;
        for _ in 0..20 {
            a = step(&a, &p, &g).unwrap();
            b = step_compact(&b, &p, 8.0, DEFAULT_CEILING, &g).unwrap();
        }
        let edge = ((8.0 - a.t) / g.dr) as usize - 30;
        assert_eq!(&a.psi[..edge], &b.psi[..edge]);
    }

    #[test]
    fn compact_coefficient_at_origin() {
        let p = PowerParams::new(2.5, 1.3, 0.01).unwrap();
        let m = Model::compact(&p, 5.0 / 6.0);
        assert_relative_eq!(m.coefficient(0.0, 0.0), (36.0f64 / 25.0).powf(0.5), epsilon = 1e-15);
    }

    #[test]
    fn ceiling_truncates_evolution() {
        let g = RadialGrid::new(2.0, 64, 0.5).unwrap();
        let p = PowerParams::new(2.0 + 0.5, 1.3, 0.01).unwrap();
        let model = Model {
            p: p.p(),
            nonlinear: true,
            variant: Variant::CompactCone {
                big_r: 1.0,
                ceiling: 10.0,
            },
        };
        let data = InitialData::at_rest(Profile::gaussian(0.1, 0.3).unwrap());
        let traj = simulate(&data, 0.9, 0.1, &model, &p, &g).unwrap();
        assert!(traj.truncated_at.is_some());
        assert!(traj.t_end() < 0.9);
    }

    #[test]
    fn evolve_zero_horizon_and_zero_data() {
        let g = RadialGrid::new(8.0, 64, 0.5).unwrap();
        let p = params3();
        let data = InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap());
        let s0 = init_state(&data, &g);
        let tr = evolve(s0.clone(), 0.0, 0.5, &Model::full_space(&p), &p, &g, data).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0], s0);
        let z = simulate(&InitialData::zero(), 2.0, 0.5, &Model::full_space(&p), &p, &g).unwrap();
        assert_eq!(z.times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(z.snapshots.iter().all(|s| s.psi.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn snapshot_times_end_exactly() {
        assert_eq!(
            snapshot_times(0.0, 1.0, 0.3),
            vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]
        );
        assert_eq!(snapshot_times(0.0, 0.0, 0.3), vec![0.0]);
    }

    #[test]
    fn dalembert_examples() {
        let data = InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap());
        for r in [0.0, 0.5, 2.0] {
            assert_relative_eq!(dalembert_linear(&data, 0.0, r), (-r * r).exp(), epsilon = 1e-14);
        }
        let psi = 0.5 * (3.0 * (-9.0f64).exp() - (-1.0f64).exp());
        assert_relative_eq!(dalembert_linear(&data, 2.0, 1.0), psi, epsilon = 1e-14);
        let bump = InitialData::new(
            Profile::bump(1.0, 1.0, 2.0).unwrap(),
            Profile::bump(0.7, 1.0, 2.0).unwrap(),
        );
        assert_eq!(dalembert_linear(&bump, 10.0, 1.0), 0.0);
        assert_eq!(dalembert_linear(&bump, 10.0, 0.0), 0.0);
    }

    #[test]
    fn dalembert_origin_limit_is_continuous() {
        let data = InitialData::new(Profile::gaussian(1.0, 1.2).unwrap(), Profile::tail(0.4, 2.5).unwrap());
        for t in [0.3, 1.0, 4.0] {
            let at0 = dalembert_linear(&data, t, 0.0);
            let near = dalembert_linear(&data, t, 1e-4);
            assert!((at0 - near).abs() < 1e-6, "t = {t}: {at0} vs {near}");
        }
    }

    #[test]
    fn dalembert_solves_the_wave_equation() {
        let data = InitialData::new(
            Profile::gaussian(1.0, 1.0).unwrap(),
            Profile::gaussian(0.5, 0.8).unwrap(),
        );
        let h = 1e-3;
        for &(t, r) in &[(1.0, 0.7), (2.5, 3.0), (0.4, 1.5)] {
            let psi = |t: f64, r: f64| r * dalembert_linear(&data, t, r);
            let tt = (psi(t + h, r) - 2.0 * psi(t, r) + psi(t - h, r)) / (h * h);
            let rr = (psi(t, r + h) - 2.0 * psi(t, r) + psi(t, r - h)) / (h * h);
            assert!((tt - rr).abs() < 1e-5, "({t}, {r}): {tt} vs {rr}");
        }
    }

    #[test]
    fn sampling_reproduces_nodes_and_is_even() {
        let g = RadialGrid::new(8.0, 128, 0.5).unwrap();
        let p = params3();
        let data = InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap());
        let tr = simulate(&data, 1.0, 0.25, &Model::full_space(&p), &p, &g).unwrap();
        let s = &tr.snapshots[2];
        for interp in [Interp::Linear, Interp::Cubic] {
            let v = tr.sample(s.t, g.radius(10), interp).unwrap();
            assert_relative_eq!(v.phi, s.phi(10, g.dr), epsilon = 1e-14);
        }
        assert!(tr.sample(1.5, 1.0, Interp::Linear).is_err());
        assert!(tr.sample(0.5, 9.0, Interp::Linear).is_err());
        let a = tr.sample(0.6, 0.01, Interp::Cubic).unwrap();
        let b = tr.sample(0.6, 0.0, Interp::Cubic).unwrap();
        assert!((a.phi - b.phi).abs() < 1e-3);
    }

    #[test]
    fn cubic_sampling_is_more_accurate_than_linear() {
        let g = RadialGrid::new(12.0, 384, 0.5).unwrap();
        let p = params3();
        let data = InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap());
        let tr = simulate(&data, 2.0, 0.2, &Model::linear(&p), &p, &g).unwrap();
        let (mut el, mut ec) = (0.0f64, 0.0f64);
        for k in 0..50 {
            let t = 0.03 + 0.037 * k as f64;
            let r = 0.11 + 0.071 * k as f64;
            let exact = dalembert_linear(&data, t, r);
            el = el.max((tr.phi(t, r, Interp::Linear).unwrap() - exact).abs());
            ec = ec.max((tr.phi(t, r, Interp::Cubic).unwrap() - exact).abs());
        }
        assert!(ec < 0.2 * el, "cubic {ec} linear {el}");
    }
}
