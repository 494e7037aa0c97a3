//! Coordinates, weights and parameterizations shared by every other module.
//!
//! Radial spacetime points are `(t, r)` with `r = |x| ≥ 0`. The null
//! coordinates are `u = (t − r)/2`, `v = (t + r)/2`.

use crate::error::{invalid, outside, Result};
use crate::quadrature::GaussLegendre;

/// Threshold (1+√17)/2 separating the two exponent regimes.
pub const REGIME_THRESHOLD: f64 = 2.561_552_812_808_830_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Sub,
    Super,
}

/// Nonlinearity exponent `p`, weight exponent `gamma0` and slack `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    p: f64,
    gamma0: f64,
    epsilon: f64,
}

impl PowerParams {
    /// Validates the admissible range. In the super regime `gamma0` must
    /// also exceed `4/(p−1) − 1`.
    pub fn new(p: f64, gamma0: f64, epsilon: f64) -> Result<Self> {
        if !(p > 1.0 && p < 5.0) {
            return Err(invalid(format!("p = {p} outside (1, 5)")));
        }
        let gmax = 2.0f64.min(p - 1.0);
        if !(gamma0 > 1.0 && gamma0 < gmax) {
            return Err(invalid(format!("gamma0 = {gamma0} outside (1, {gmax})")));
        }
        if !(epsilon > 0.0 && epsilon < (gamma0 - 1.0) / 10.0) {
            return Err(invalid(format!(
                "epsilon = {epsilon} outside (0, {})",
                (gamma0 - 1.0) / 10.0
            )));
        }
        if p > REGIME_THRESHOLD {
            let gmin = (4.0 / (p - 1.0) - 1.0).max(1.0);
            if !(gamma0 > gmin) {
                return Err(invalid(format!("gamma0 = {gamma0} must exceed {gmin} for p = {p}")));
            }
        }
        Ok(Self { p, gamma0, epsilon })
    }

    /// Uses `epsilon = (gamma0 − 1)/20`, the midpoint of the admissible range.
    pub fn with_default_epsilon(p: f64, gamma0: f64) -> Result<Self> {
        Self::new(p, gamma0, (gamma0 - 1.0) / 20.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn regime(&self) -> Regime {
        if self.p > REGIME_THRESHOLD {
            Regime::Super
        } else {
            Regime::Sub
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullWeights {
    pub t: f64,
    pub r: f64,
    pub u: f64,
    pub v: f64,
    pub u_plus: f64,
    pub v_plus: f64,
}

pub fn null_weights(t: f64, r: f64) -> Result<NullWeights> {
    if !(r >= 0.0) {
        return Err(outside(format!("negative radius {r}")));
    }
    let u = 0.5 * (t - r);
    let v = 0.5 * (t + r);
    Ok(NullWeights {
        t,
        r,
        u,
        v,
        u_plus: u.hypot(1.0),
        v_plus: v.hypot(1.0),
    })
}

/// A point on the backward light cone of an apex, in the axisymmetric
/// reduction. `s = −ω₀·ω̃` is the cosine between the apex direction and the
/// cone generator, `rt` the distance from the apex along the cone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    pub rt: f64,
    pub s: f64,
    pub t: f64,
    pub r: f64,
    pub tau: f64,
}

impl ConePoint {
    pub fn new(t0: f64, r0: f64, rt: f64, s: f64) -> Self {
        let r = cone_radius(r0, rt, s);
        let tau = if r0 == 0.0 {
            1.0
        } else if r > 0.0 {
            ((rt - r0 * s) / r).clamp(-1.0, 1.0)
        } else {
            // r = 0 only at s = 1, rt = r0 where the generator passes the origin.
            -1.0
        };
        Self {
            rt,
            s,
            t: t0 - rt,
            r,
            tau,
        }
    }
}

/// `r = √((r̃ − r0·s)² + (1 − s²)·r0²)`, the spatial radius of a cone point.
pub fn cone_radius(r0: f64, rt: f64, s: f64) -> f64 {
    let a = rt - r0 * s;
    let b = ((1.0 - s) * (1.0 + s)).max(0.0).sqrt() * r0;
    a.hypot(b)
}

/// Gauss–Legendre tabulation of the backward cone of `(t0, r0)`.
#[derive(Debug, Clone)]
pub struct ConeGeometry {
    pub t0: f64,
    pub r0: f64,
    rt_nodes: Vec<f64>,
    rt_weights: Vec<f64>,
    s_nodes: Vec<f64>,
    s_weights: Vec<f64>,
}

impl ConeGeometry {
    pub fn rt_nodes(&self) -> &[f64] {
        &self.rt_nodes
    }

    pub fn rt_weights(&self) -> &[f64] {
        &self.rt_weights
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    pub fn s_weights(&self) -> &[f64] {
        &self.s_weights
    }

    pub fn point(&self, rt: f64, s: f64) -> ConePoint {
        ConePoint::new(self.t0, self.r0, rt, s)
    }

    /// All tabulated nodes with the product weight `w_r̃·w_s` (sphere factor
    /// 2π not included).
    pub fn nodes(&self) -> impl Iterator<Item = (ConePoint, f64)> + '_ {
        self.rt_nodes.iter().zip(&self.rt_weights).flat_map(move |(&rt, &wr)| {
            self.s_nodes
                .iter()
                .zip(&self.s_weights)
                .map(move |(&s, &ws)| (self.point(rt, s), wr * ws))
        })
    }

    /// `∫_{S²} f dω̃ = 2π ∫_{−1}^{1} f ds` at fixed `r̃`.
    pub fn sphere_integral<F: FnMut(ConePoint) -> f64>(&self, rt: f64, mut f: F) -> f64 {
        let sum: f64 = self
            .s_nodes
            .iter()
            .zip(&self.s_weights)
            .map(|(&s, &w)| w * f(self.point(rt, s)))
            .sum();
        2.0 * std::f64::consts::PI * sum
    }
}

pub fn cone_geometry(t0: f64, r0: f64, n_r: usize, n_s: usize) -> Result<ConeGeometry> {
    if !(t0 >= 0.0) {
        return Err(invalid(format!("apex time {t0} is negative")));
    }
    if !(r0 >= 0.0) {
        return Err(invalid(format!("apex radius {r0} is negative")));
    }
    if n_r < 2 || n_s < 2 {
        return Err(invalid("cone quadrature needs at least two nodes per direction"));
    }
    let gr = GaussLegendre::new(n_r);
    let (rt_nodes, rt_weights) = gr.mapped(0.0, t0).unzip();
    let gs = GaussLegendre::new(n_s);
    Ok(ConeGeometry {
        t0,
        r0,
        rt_nodes,
        rt_weights,
        s_nodes: gs.nodes().to_vec(),
        s_weights: gs.weights().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactConeWeights {
    pub big_r: f64,
    pub t: f64,
    pub r: f64,
    pub u_star: f64,
    pub v_star: f64,
    pub lambda_cc: f64,
}

impl CompactConeWeights {
    pub fn new(big_r: f64, t: f64, r: f64) -> Self {
        let u_star = big_r - t + r;
        let v_star = big_r - t - r;
        Self {
            big_r,
            t,
            r,
            u_star,
            v_star,
            lambda_cc: 1.0 / (u_star * v_star),
        }
    }

    /// Inside the forward domain of dependence of the ball of radius `R`.
    pub fn is_inside(&self) -> bool {
        self.t >= 0.0 && self.r >= 0.0 && self.v_star > 0.0
    }
}

/// The hyperboloid `(t*)² − r² = κ·t*` with `t* = t + t_shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperboloidSpec {
    pub r_star: f64,
    pub t_shift: f64,
    pub kappa: f64,
}

impl Default for HyperboloidSpec {
    fn default() -> Self {
        let r_star = 5.0 / 6.0;
        Self {
            r_star,
            t_shift: 3.0,
            kappa: 1.0 / r_star,
        }
    }
}

impl HyperboloidSpec {
    /// `(t*)² − r² − κ·t*`; nonnegative inside (to the future of) the hyperboloid.
    pub fn level(&self, t: f64, r: f64) -> f64 {
        let ts = t + self.t_shift;
        ts * ts - r * r - self.kappa * ts
    }
}

pub fn hyperboloid_radius(t: f64, spec: &HyperboloidSpec) -> Result<f64> {
    let ts = t + spec.t_shift;
    let r2 = ts * ts - spec.kappa * ts;
    if !(r2 >= 0.0) {
        return Err(outside(format!("hyperboloid has no point at t = {t}")));
    }
    Ok(r2.sqrt())
}

/// `{u ≥ −1}`, i.e. `r ≤ t + 2`.
pub fn interior_region_contains(t: f64, r: f64) -> bool {
    (t - r) / 2.0 >= -1.0
}

pub fn inside_hyperboloid(t: f64, r: f64, spec: &HyperboloidSpec) -> bool {
    spec.level(t, r) >= 0.0
}
