//! Quadrature oracles for the sphere-integration bounds on backward light
//! cones, and sweeps estimating their implicit constants.
//!
//! All three bounds integrate over the sphere `{x0 + r̃ω̃}` at time
//! `t = t0 − r̃`, reduced to one dimension in `s = −ω₀·ω̃`:
//!
//! * exterior bound: `∫((1+τ)r^γ + (r0−t0)^γ)^{−α} r^{−β} dω̃
//!   ≲ (r0−r̃)^{2−β−γ+ε} r0^{−2} ((r0−r̃)^{(1−α)γ} + (r0−t0)^{(1−α)γ})`
//!   for `1 < γ < 2`, `β + αγ > 2`, `0 ≤ r̃ ≤ t0 < r0`;
//! * compact-cone bound: `∫(R−t−r)^{−γ′} dω̃ ≲ (R−t)^{γ′}(R−t0)^{−γ′}(v0+r̃)^{−γ′}`;
//! * compact-cone bound for small powers:
//!   `∫((1−τ)u_*^γ + v_*^γ)^{−α} dω̃ ≲ (R−t0)^{−αγ}`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, outside, Error, Result};
use crate::geometry::{CompactConeWeights, ConePoint};
use crate::quadrature::{EndpointRefinement, QuadratureEstimate, RefinedIntegrator};

/// Which sphere-integration bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LemmaId {
    Exterior,
    Compact,
    CompactWeighted,
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LemmaId::Exterior => "exterior",
            LemmaId::Compact => "compact",
            LemmaId::CompactWeighted => "compact-weighted",
        };
        f.write_str(s)
    }
}

/// One evaluation: left side, right side and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Quadrature error estimate of `lhs`.
    pub error: f64,
    pub converged: bool,
}

fn sphere_quadrature<F: Fn(f64) -> f64>(
    integ: &RefinedIntegrator,
    f: F,
    refine_lo: bool,
    refine_hi: bool,
) -> Result<QuadratureEstimate> {
    let est = integ.integrate_with(f, -1.0, 1.0, refine_lo, refine_hi)?;
    Ok(QuadratureEstimate {
        value: 2.0 * PI * est.value,
        error: 2.0 * PI * est.error,
    })
}

fn check(lhs: Result<QuadratureEstimate>, rhs: f64) -> Result<LemmaCheck> {
    let (est, converged) = match lhs {
        Ok(e) => (e, true),
        Err(Error::Quadrature { value, error }) => (
            QuadratureEstimate {
                value: 2.0 * PI * value,
                error: 2.0 * PI * error,
            },
            false,
        ),
        Err(e) => return Err(e),
    };
    Ok(LemmaCheck {
        lhs: est.value,
        rhs,
        ratio: est.value / rhs,
        error: est.error,
        converged,
    })
}

/// Exponents of the exterior bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorBoundParams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Loss exponent, used only when `α = 1`.
    pub eps: f64,
}

impl ExteriorBoundParams {
    /// Checks `1 < γ < 2`, `α, β ≥ 0`, `β + αγ > 2`.
    pub fn new(gamma: f64, alpha: f64, beta: f64, eps: f64) -> Result<Self> {
        let p = Self {
            gamma,
            alpha,
            beta,
            eps,
        };
        p.check_ranges()?;
        if !p.satisfies_hypothesis() {
            return Err(invalid(format!(
                "exterior bound needs beta + alpha*gamma > 2, got {}",
                beta + alpha * gamma
            )));
        }
        Ok(p)
    }

    /// Same ranges, but `β + αγ ≤ 2` allowed: used for negative controls.
    pub fn violating(gamma: f64, alpha: f64, beta: f64, eps: f64) -> Result<Self> {
        let p = Self {
            gamma,
            alpha,
            beta,
            eps,
        };
        p.check_ranges()?;
        Ok(p)
    }

    fn check_ranges(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma < 2.0) || !(self.alpha >= 0.0) || !(self.beta >= 0.0) || !(self.eps >= 0.0)
        {
            return Err(invalid(format!("exterior bound parameters out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn satisfies_hypothesis(&self) -> bool {
        self.beta + self.alpha * self.gamma > 2.0
    }
}

fn check_exterior_apex(t0: f64, r0: f64, rt: f64) -> Result<()> {
    if !(0.0 <= rt && rt <= t0 && t0 < r0) {
        return Err(outside(format!(
            "need 0 <= rt <= t0 < r0, got rt = {rt}, t0 = {t0}, r0 = {r0}"
        )));
    }
    Ok(())
}

/// `2π∫_{−1}^{1} r^{−β}(r^{γ−1}(r + r̃ − r0 s) + (r0−t0)^γ)^{−α} ds`, refined
/// toward `s = 1`.
pub fn lhs_exterior(
    gamma: f64,
    alpha: f64,
    beta: f64,
    t0: f64,
    r0: f64,
    rt: f64,
    integ: &RefinedIntegrator,
) -> Result<QuadratureEstimate> {
    check_exterior_apex(t0, r0, rt)?;
    let d = (r0 - t0).powf(gamma);
    let f = |s: f64| {
        let pt = ConePoint::new(t0, r0, rt, s);
        let r = pt.r;
        // (1 + τ)r = r + r̃ − r0 s, formed without dividing by r.
        let one_plus_tau_r = (r + rt - r0 * s).max(0.0);
        r.powf(-beta) * (r.powf(gamma - 1.0) * one_plus_tau_r + d).powf(-alpha)
    };
    sphere_quadrature(integ, f, false, true)
}

/// `(r0−r̃)^{2−β−γ+ε} r0^{−2} ((r0−r̃)^{(1−α)γ} + (r0−t0)^{(1−α)γ})` with
/// `ε` applied only for `α = 1`.
pub fn rhs_exterior(params: &ExteriorBoundParams, t0: f64, r0: f64, rt: f64) -> f64 {
    let ExteriorBoundParams {
        gamma,
        alpha,
        beta,
        eps,
    } = *params;
    let eps = if alpha == 1.0 { eps } else { 0.0 };
    let e = (1.0 - alpha) * gamma;
    (r0 - rt).powf(2.0 - beta - gamma + eps) * r0.powi(-2) * ((r0 - rt).powf(e) + (r0 - t0).powf(e))
}

pub fn check_exterior(
    params: &ExteriorBoundParams,
    t0: f64,
    r0: f64,
    rt: f64,
    integ: &RefinedIntegrator,
) -> Result<LemmaCheck> {
    let lhs = lhs_exterior(params.gamma, params.alpha, params.beta, t0, r0, rt, integ);
    if let Err(e @ (Error::OutsideDomain(_) | Error::InvalidParameter(_))) = lhs {
        return Err(e);
    }
    check(lhs, rhs_exterior(params, t0, r0, rt))
}

fn check_compact_apex(big_r: f64, t0: f64, r0: f64, rt: f64) -> Result<()> {
    if !(big_r > 0.0) {
        return Err(invalid(format!("cone height must be positive, got {big_r}")));
    }
    if !(t0 >= 0.0 && r0 >= 0.0 && t0 + r0 < big_r) {
        return Err(outside(format!(
            "apex ({t0}, {r0}) is not inside the cone of height {big_r}"
        )));
    }
    if !(0.0 <= rt && rt <= t0) {
        return Err(outside(format!("need 0 <= rt <= t0, got rt = {rt}, t0 = {t0}")));
    }
    Ok(())
}

/// `2π∫(R−t−r)^{−γ′}ds` against `(R−t)^{γ′}(R−t0)^{−γ′}(v0+r̃)^{−γ′}`.
pub fn check_compact(
    gamma_prime: f64,
    big_r: f64,
    t0: f64,
    r0: f64,
    rt: f64,
    integ: &RefinedIntegrator,
) -> Result<LemmaCheck> {
    if !(gamma_prime < 1.0) {
        return Err(invalid(format!("need gamma' < 1, got {gamma_prime}")));
    }
    check_compact_apex(big_r, t0, r0, rt)?;
    let t = t0 - rt;
    let f = |s: f64| {
        let r = ConePoint::new(t0, r0, rt, s).r;
        (big_r - t - r).powf(-gamma_prime)
    };
    let v0 = big_r - t0 - r0;
    let rhs = (big_r - t).powf(gamma_prime) * (big_r - t0).powf(-gamma_prime) * (v0 + rt).powf(-gamma_prime);
    check(sphere_quadrature(integ, f, true, false), rhs)
}

/// `2π∫((1−τ)u_*^γ + v_*^γ)^{−α}ds` against `(R−t0)^{−αγ}`.
pub fn check_compact_weighted(
    gamma: f64,
    alpha: f64,
    big_r: f64,
    t0: f64,
    r0: f64,
    rt: f64,
    integ: &RefinedIntegrator,
) -> Result<LemmaCheck> {
    if !(gamma > 0.0 && gamma < 1.0 && (0.0..1.0).contains(&alpha)) {
        return Err(invalid(format!(
            "need 0 < gamma < 1 and 0 <= alpha < 1, got ({gamma}, {alpha})"
        )));
    }
    check_compact_apex(big_r, t0, r0, rt)?;
    let f = |s: f64| {
        let pt = ConePoint::new(t0, r0, rt, s);
        let w = CompactConeWeights::new(big_r, pt.t, pt.r);
        ((1.0 - pt.tau) * w.u_star.powf(gamma) + w.v_star.max(0.0).powf(gamma)).powf(-alpha)
    };
    let rhs = (big_r - t0).powf(-alpha * gamma);
    check(sphere_quadrature(integ, f, true, false), rhs)
}

/// The bound being swept and its fixed exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LemmaKind {
    Exterior(ExteriorBoundParams),
    Compact { gamma_prime: f64, big_r: f64 },
    CompactWeighted { gamma: f64, alpha: f64, big_r: f64 },
}

impl LemmaKind {
    pub fn id(&self) -> LemmaId {
        match self {
            LemmaKind::Exterior(_) => LemmaId::Exterior,
            LemmaKind::Compact { .. } => LemmaId::Compact,
            LemmaKind::CompactWeighted { .. } => LemmaId::CompactWeighted,
        }
    }

    fn exponents(&self) -> [f64; 3] {
        match *self {
            LemmaKind::Exterior(p) => [p.gamma, p.alpha, p.beta],
            LemmaKind::Compact { gamma_prime, .. } => [gamma_prime, f64::NAN, f64::NAN],
            LemmaKind::CompactWeighted { gamma, alpha, .. } => [gamma, alpha, f64::NAN],
        }
    }
}

/// A tensor grid of apexes and sphere radii.
///
/// For the exterior bound the apex axes are `r0` (geometric on
/// `[apex_lo, apex_hi]`) and `t0 = f·(r0 − gap)` with `f` on `[0, frac_hi]`.
/// For the compact-cone bounds they are `t0 = a·R` with `a` on
/// `[apex_lo, apex_hi]` and `r0 = f·(R − t0)` with `f` on `[0, frac_hi]`.
/// In both cases `r̃ = c·t0` with `c` uniform on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaSweepConfig {
    pub kind: LemmaKind,
    pub n_apex: usize,
    pub n_frac: usize,
    pub n_rt: usize,
    pub apex_lo: f64,
    pub apex_hi: f64,
    pub frac_hi: f64,
    /// Minimum `r0 − t0` for exterior apexes.
    pub gap: f64,
    pub quadrature: EndpointRefinement,
}

impl LemmaSweepConfig {
    /// Default 10×10×10 grid for `kind`.
    pub fn new(kind: LemmaKind) -> Self {
        let (apex_lo, apex_hi, frac_hi) = match kind {
            LemmaKind::Exterior(_) => (2.5, 200.0, 1.0),
            _ => (0.0, 0.95, 0.98),
        };
        Self {
            kind,
            n_apex: 10,
            n_frac: 10,
            n_rt: 10,
            apex_lo,
            apex_hi,
            frac_hi,
            gap: 2.0,
            quadrature: EndpointRefinement {
                rel_tol: 1e-8,
                ..Default::default()
            },
        }
    }

    /// Twice as dense along every axis; the old grid is a subset.
    pub fn densified(&self) -> Self {
        Self {
            n_apex: 2 * self.n_apex - 1,
            n_frac: 2 * self.n_frac - 1,
            n_rt: 2 * self.n_rt - 1,
            ..*self
        }
    }

    pub fn tuple_count(&self) -> usize {
        self.n_apex * self.n_frac * self.n_rt
    }

    fn validate(&self) -> Result<()> {
        if self.n_apex < 2 || self.n_frac < 2 || self.n_rt < 2 {
            return Err(invalid("lemma sweep needs at least two points per axis"));
        }
        if !(self.apex_hi > self.apex_lo) || !(self.frac_hi > 0.0 && self.frac_hi <= 1.0) {
            return Err(invalid("lemma sweep axis ranges are empty"));
        }
        match self.kind {
            LemmaKind::Exterior(p) => {
                p.check_ranges()?;
                if !(self.apex_lo > self.gap && self.gap > 0.0) {
                    return Err(invalid("exterior sweep needs 0 < gap < smallest r0"));
                }
            }
            LemmaKind::Compact { gamma_prime, big_r } => {
                if !(gamma_prime < 1.0 && big_r > 0.0) {
                    return Err(invalid(format!(
                        "compact sweep needs gamma' < 1, R > 0: {:?}",
                        self.kind
                    )));
                }
            }
            LemmaKind::CompactWeighted { gamma, alpha, big_r } => {
                if !(gamma > 0.0 && gamma < 1.0 && (0.0..1.0).contains(&alpha) && big_r > 0.0) {
                    return Err(invalid(format!(
                        "compact sweep exponents out of range: {:?}",
                        self.kind
                    )));
                }
            }
        }
        if !matches!(self.kind, LemmaKind::Exterior(_)) && !(self.apex_lo >= 0.0 && self.apex_hi < 1.0) {
            return Err(invalid("compact apex times must lie in [0, R)"));
        }
        Ok(())
    }

    /// `(t0, r0, r̃)` tuples, in a fixed order.
    pub fn tuples(&self) -> Vec<(f64, f64, f64)> {
        let lin = |n: usize, k: usize| k as f64 / (n - 1) as f64;
        let mut out = Vec::with_capacity(self.tuple_count());
        for i in 0..self.n_apex {
            let a = lin(self.n_apex, i);
            for j in 0..self.n_frac {
                let f = self.frac_hi * lin(self.n_frac, j);
                let (t0, r0) = match self.kind {
                    LemmaKind::Exterior(_) => {
                        let r0 = self.apex_lo * (self.apex_hi / self.apex_lo).powf(a);
                        (f * (r0 - self.gap), r0)
                    }
                    LemmaKind::Compact { big_r, .. } | LemmaKind::CompactWeighted { big_r, .. } => {
                        let t0 = big_r * (self.apex_lo + a * (self.apex_hi - self.apex_lo));
                        (t0, f * (big_r - t0))
                    }
                };
                for k in 0..self.n_rt {
                    out.push((t0, r0, t0 * lin(self.n_rt, k)));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t0: f64,
    pub r0: f64,
    pub rt: f64,
    pub check: LemmaCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: LemmaKind,
    pub rows: Vec<SweepRow>,
    pub sup_ratio: f64,
    pub argmax: SweepRow,
    pub unconverged: usize,
}

pub fn evaluate(kind: &LemmaKind, t0: f64, r0: f64, rt: f64, integ: &RefinedIntegrator) -> Result<LemmaCheck> {
    match *kind {
        LemmaKind::Exterior(p) => check_exterior(&p, t0, r0, rt, integ),
        LemmaKind::Compact { gamma_prime, big_r } => check_compact(gamma_prime, big_r, t0, r0, rt, integ),
        LemmaKind::CompactWeighted { gamma, alpha, big_r } => {
            check_compact_weighted(gamma, alpha, big_r, t0, r0, rt, integ)
        }
    }
}

/// Evaluates every tuple in parallel and returns the supremum of `LHS/RHS`.
pub fn constant_sweep(cfg: &LemmaSweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let integ = RefinedIntegrator::new(cfg.quadrature);
    let rows = cfg
        .tuples()
        .into_par_iter()
        .map(|(t0, r0, rt)| {
            Ok(SweepRow {
                t0,
                r0,
                rt,
                check: evaluate(&cfg.kind, t0, r0, rt, &integ)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmax = *rows
        .iter()
        .filter(|r| r.check.ratio.is_finite())
        .max_by(|a, b| a.check.ratio.total_cmp(&b.check.ratio))
        .ok_or_else(|| invalid("lemma sweep produced no finite ratio"))?;
    let sup_ratio = if rows
        .iter()
        .any(|r| !r.check.ratio.is_finite() && !r.check.ratio.is_nan())
    {
        f64::INFINITY
    } else {
        argmax.check.ratio
    };
    let unconverged = rows.iter().filter(|r| !r.check.converged).count();
    Ok(SweepResult {
        kind: cfg.kind,
        rows,
        sup_ratio,
        argmax,
        unconverged,
    })
}

impl SweepResult {
    /// One row per tuple, then a `sup` row carrying the arg-max tuple.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "lemma",
            "row",
            "e1",
            "e2",
            "e3",
            "t0",
            "r0",
            "rt",
            "lhs",
            "rhs",
            "ratio",
            "error",
            "converged",
        ])?;
        let [e1, e2, e3] = self.kind.exponents().map(|e| format!("{e}"));
        let id = self.kind.id().to_string();
        let mut emit = |label: &str, r: &SweepRow| -> Result<()> {
            out.write_record([
                id.clone(),
                label.to_string(),
                e1.clone(),
                e2.clone(),
                e3.clone(),
                format!("{:e}", r.t0),
                format!("{:e}", r.r0),
                format!("{:e}", r.rt),
                format!("{:e}", r.check.lhs),
                format!("{:e}", r.check.rhs),
                format!("{:e}", r.check.ratio),
                format!("{:e}", r.check.error),
                r.check.converged.to_string(),
            ])?;
            Ok(())
        };
        for (k, r) in self.rows.iter().enumerate() {
            emit(&k.to_string(), r)?;
        }
        emit("sup", &self.argmax)?;
        out.flush()?;
        Ok(())
    }
}

/// Sweep of `r̃ ∈ [0, frac·t0]` at one exterior apex, returning
/// `(r̃, ratio)` pairs. With `β + αγ ≤ 2` the ratio grows without bound as
/// `r̃ → r0`.
pub fn exterior_ratio_profile(
    params: &ExteriorBoundParams,
    t0: f64,
    r0: f64,
    frac: f64,
    n: usize,
    integ: &RefinedIntegrator,
) -> Result<Vec<(f64, f64)>> {
    (0..n)
        .map(|k| {
            let rt = frac * t0 * k as f64 / (n - 1).max(1) as f64;
            Ok((rt, check_exterior(params, t0, r0, rt, integ)?.ratio))
        })
        .collect()
}

/// Growth of the ratio between `r̃ = 0` and `r̃ = 0.99·t0` at apex `(t0, r0)`.
pub fn exterior_negative_control(
    params: &ExteriorBoundParams,
    t0: f64,
    r0: f64,
    integ: &RefinedIntegrator,
) -> Result<f64> {
    let profile = exterior_ratio_profile(params, t0, r0, 0.99, 12, integ)?;
    let first = profile[0].1;
    let last = profile[profile.len() - 1].1;
    Ok(last / first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn integ() -> RefinedIntegrator {
        RefinedIntegrator::new(EndpointRefinement::default())
    }

    #[test]
    fn exterior_degenerate_sphere() {
        let v = lhs_exterior(1.5, 0.0, 2.0, 3.0, 5.0, 0.0, &integ()).unwrap();
        assert_relative_eq!(v.value, 4.0 * PI * 5f64.powf(-2.0), max_relative = 1e-12);
        let p = ExteriorBoundParams::new(1.5, 1.0, 1.5, 0.05).unwrap();
        let c = check_exterior(&p, 3.0, 5.0, 0.0, &integ()).unwrap();
        assert_relative_eq!(c.ratio, c.lhs / rhs_exterior(&p, 3.0, 5.0, 0.0));
    }

    #[test]
    fn exterior_matches_closed_form_for_unit_exponents() {
        // β = 0, α = γ = 1: substituting r for s gives
        // (4π/r0)∫ (w − r̃)/(w² − c²) dw over w = r + r̃, c² = r0² − 2r̃(r0 − t0).
        for &(t0, r0, rt) in &[(3.0, 5.0, 1.0), (9.0, 10.0, 8.5), (0.5, 4.0, 0.25)] {
            let c2: f64 = r0 * r0 - 2.0 * rt * (r0 - t0);
            let c = c2.sqrt();
            let anti = |w: f64| 0.5 * (w * w - c2).ln() - rt / (2.0 * c) * ((w - c) / (w + c)).ln();
            let lo = (r0 - rt).abs() + rt;
            let hi = r0 + rt + rt;
            let want = 2.0 * PI / r0 * 2.0 * (anti(hi) - anti(lo));
            let got = lhs_exterior(1.0, 1.0, 0.0, t0, r0, rt, &integ()).unwrap();
            assert_relative_eq!(got.value, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn exterior_epsilon_only_for_alpha_one() {
        let a = ExteriorBoundParams::new(1.5, 2.0, 0.0, 0.1).unwrap();
        let b = ExteriorBoundParams { eps: 0.0, ..a };
        assert_eq!(rhs_exterior(&a, 5.0, 10.0, 2.0), rhs_exterior(&b, 5.0, 10.0, 2.0));
        let c = ExteriorBoundParams::new(1.5, 1.0, 1.0, 0.1).unwrap();
        let d = ExteriorBoundParams { eps: 0.0, ..c };
        assert!(rhs_exterior(&c, 5.0, 10.0, 2.0) > rhs_exterior(&d, 5.0, 10.0, 2.0));
    }

    #[test]
    fn exterior_generic_point_is_finite() {
        let p = ExteriorBoundParams::new(1.5, 1.0, 2.0, 0.05).unwrap();
        let r0 = 10.0;
        let t0 = 0.9 * r0;
        let c = check_exterior(&p, t0, r0, 0.5 * t0, &integ()).unwrap();
        assert!(c.converged && c.ratio.is_finite() && c.ratio > 0.0);
    }

    #[test]
    fn exterior_rejects_bad_inputs() {
        assert!(ExteriorBoundParams::new(1.5, 1.0, 0.4, 0.0).is_err());
        assert!(ExteriorBoundParams::new(2.5, 1.0, 2.0, 0.0).is_err());
        assert!(lhs_exterior(1.5, 1.0, 2.0, 5.0, 4.0, 1.0, &integ()).is_err());
    }

    #[test]
    fn compact_trivial_cases() {
        let (big_r, t0, rt) = (5.0 / 6.0, 0.3, 0.1);
        let c = check_compact(0.6, big_r, t0, 0.0, rt, &integ()).unwrap();
        assert_relative_eq!(
            c.lhs,
            4.0 * PI * (big_r - (t0 - rt) - rt).powf(-0.6),
            max_relative = 1e-12
        );
        let c = check_compact(0.0, big_r, t0, 0.2, rt, &integ()).unwrap();
        assert_relative_eq!(c.lhs, 4.0 * PI, max_relative = 1e-12);
        assert_eq!(c.rhs, 1.0);
        assert_relative_eq!(c.ratio, 4.0 * PI, max_relative = 1e-12);
        assert!(check_compact(0.5, big_r, 0.5, 0.4, 0.1, &integ()).is_err());
    }

    #[test]
    fn compact_matches_closed_form() {
        // ∫(R−t−r)^{−γ′} over s, with r dr = −r0 r̃ ds, has a closed form.
        let (g, big_r, t0, r0, rt) = (0.6, 5.0 / 6.0, 0.2, 0.3, 0.15);
        let t = t0 - rt;
        let a = big_r - t;
        let anti = |r: f64| -(a - r).powf(1.0 - g) * r / (1.0 - g) - (a - r).powf(2.0 - g) / ((1.0 - g) * (2.0 - g));
        let want = 2.0 * PI / (r0 * rt) * (anti(r0 + rt) - anti((r0 - rt).abs()));
        let c = check_compact(g, big_r, t0, r0, rt, &integ()).unwrap();
        assert_relative_eq!(c.lhs, want, max_relative = 1e-9);
    }

    #[test]
    fn compact_weighted_trivial_and_analytic_bound() {
        let big_r = 5.0 / 6.0;
        let c = check_compact_weighted(0.5, 0.0, big_r, 0.4, 0.2, 0.3, &integ()).unwrap();
        assert_relative_eq!(c.lhs, 4.0 * PI, max_relative = 1e-12);
        assert_eq!(c.rhs, 1.0);
        for (g, a) in [(0.3, 0.3), (0.6, 0.9), (0.9, 0.6)] {
            for t0 in [0.0, 0.2, 0.5, 0.7] {
                let r0 = 0.75 * (big_r - t0);
                for frac in [0.0, 0.5, 1.0] {
                    let c = check_compact_weighted(g, a, big_r, t0, r0, frac * t0, &integ()).unwrap();
                    assert!(c.ratio <= 4.0 * PI * 4f64.powf(a * g) * (1.0 + 1e-9), "{c:?}");
                }
            }
        }
    }

    #[test]
    fn tuples_nest_under_densification() {
        for kind in [
            LemmaKind::Exterior(ExteriorBoundParams::new(1.5, 1.0, 1.5, 0.05).unwrap()),
            LemmaKind::Compact {
                gamma_prime: 0.6,
                big_r: 5.0 / 6.0,
            },
        ] {
            let cfg = LemmaSweepConfig::new(kind);
            let dense = cfg.densified().tuples();
            for (t0, r0, rt) in cfg.tuples() {
                assert!(dense.iter().any(|&(a, b, c)| {
                    (a - t0).abs() <= 1e-12 * (1.0 + t0)
                        && (b - r0).abs() <= 1e-12 * r0.max(1.0)
                        && (c - rt).abs() <= 1e-12 * (1.0 + rt)
                }));
            }
            assert_eq!(cfg.tuple_count(), 1000);
        }
    }

    #[test]
    fn small_sweep_writes_csv() {
        let cfg = LemmaSweepConfig {
            n_apex: 3,
            n_frac: 3,
            n_rt: 3,
            ..LemmaSweepConfig::new(LemmaKind::CompactWeighted {
                gamma: 0.5,
                alpha: 0.5,
                big_r: 5.0 / 6.0,
            })
        };
        let res = constant_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 27);
        assert!(res.sup_ratio.is_finite());
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 27 + 1);
        assert!(text.lines().last().unwrap().starts_with("compact-weighted,sup,"));
    }
}
