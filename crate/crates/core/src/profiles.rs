//! Radial initial-data profiles.

use std::fmt;

use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;

/// A radial function `f(r)`, `r ≥ 0`, smooth as a function on ℝ³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Zero,
    /// `A·exp(−r²/σ²)`
    Gaussian {
        amplitude: f64,
        sigma: f64,
    },
    /// `A·64·(x(1−x))³` with `x = (r − inner)/(outer − inner)` on [inner, outer], zero elsewhere.
    Bump {
        amplitude: f64,
        inner: f64,
        outer: f64,
    },
    /// `A·(1 + r²)^{−q/2}`, decaying like `A·r^{−q}`.
    Tail {
        amplitude: f64,
        q: f64,
    },
}

impl Profile {
    pub fn gaussian(amplitude: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !amplitude.is_finite() {
            return Err(invalid(format!("gaussian needs sigma > 0, got {sigma}")));
        }
        Ok(Profile::Gaussian { amplitude, sigma })
    }

    pub fn bump(amplitude: f64, inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) || !amplitude.is_finite() {
            return Err(invalid(format!(
                "bump needs 0 <= inner < outer, got [{inner}, {outer}]"
            )));
        }
        Ok(Profile::Bump {
            amplitude,
            inner,
            outer,
        })
    }

    pub fn tail(amplitude: f64, q: f64) -> Result<Self> {
        if !(q > 0.0) || !amplitude.is_finite() {
            return Err(invalid(format!("tail needs q > 0, got {q}")));
        }
        Ok(Profile::Tail { amplitude, q })
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { amplitude, .. } | Profile::Bump { amplitude, .. } | Profile::Tail { amplitude, .. } => {
                amplitude
            }
        }
    }

    /// The same shape with amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Profile::Zero => Profile::Zero,
            Profile::Gaussian { amplitude, sigma } => Profile::Gaussian {
                amplitude: amplitude * factor,
                sigma,
            },
            Profile::Bump {
                amplitude,
                inner,
                outer,
            } => Profile::Bump {
                amplitude: amplitude * factor,
                inner,
                outer,
            },
            Profile::Tail { amplitude, q } => Profile::Tail {
                amplitude: amplitude * factor,
                q,
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude() == 0.0
    }

    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { amplitude, sigma } => amplitude * (-(r * r) / (sigma * sigma)).exp(),
            Profile::Bump {
                amplitude,
                inner,
                outer,
            } => {
                if r <= inner || r >= outer {
                    0.0
                } else {
                    let x = (r - inner) / (outer - inner);
                    let w = x * (1.0 - x);
                    amplitude * 64.0 * w * w * w
                }
            }
            Profile::Tail { amplitude, q } => amplitude * (1.0 + r * r).powf(-0.5 * q),
        }
    }

    /// `f′(r)` for `r ≥ 0`.
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { amplitude, sigma } => {
                let s2 = sigma * sigma;
                -2.0 * r / s2 * amplitude * (-(r * r) / s2).exp()
            }
            Profile::Bump {
                amplitude,
                inner,
                outer,
            } => {
                if r <= inner || r >= outer {
                    0.0
                } else {
                    let l = outer - inner;
                    let x = (r - inner) / l;
                    let w = x * (1.0 - x);
                    amplitude * 192.0 * w * w * (1.0 - 2.0 * x) / l
                }
            }
            Profile::Tail { amplitude, q } => -amplitude * q * r * (1.0 + r * r).powf(-0.5 * q - 1.0),
        }
    }

    /// `G(x) = ∫₀^{|x|} s·f(s) ds`, the even antiderivative of the odd
    /// extension of `r·f(r)`.
    pub fn first_moment(&self, x: f64) -> f64 {
        let x = x.abs();
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { amplitude, sigma } => {
                let s2 = sigma * sigma;
                -0.5 * amplitude * s2 * (-(x * x) / s2).exp_m1()
            }
            Profile::Bump { inner, outer, .. } => {
                let hi = x.min(outer);
                if hi <= inner {
                    return 0.0;
                }
                // s·f(s) is a polynomial of degree 7 on the support.
                GaussLegendre::new(8).integrate(inner, hi, |s| s * self.value(s))
            }
            Profile::Tail { amplitude, q } => {
                if (q - 2.0).abs() < 1e-12 {
                    0.5 * amplitude * (x * x).ln_1p()
                } else {
                    let e = 1.0 - 0.5 * q;
                    amplitude / (2.0 - q) * (e * (x * x).ln_1p()).exp_m1()
                }
            }
        }
    }

    /// Radius beyond which the profile is negligible for domain-of-dependence
    /// purposes. Tail profiles report 0: they have no compact support, and a
    /// domain `r_max ≥ R_obs + T` already isolates the observed region from
    /// the outer boundary.
    pub fn support_radius(&self) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { sigma, .. } => 6.0 * sigma,
            Profile::Bump { outer, .. } => outer,
            Profile::Tail { .. } => 0.0,
        }
    }

    /// Algebraic decay rate `q` for tail profiles.
    pub fn tail_rate(&self) -> Option<f64> {
        match *self {
            Profile::Tail { q, .. } => Some(q),
            _ => None,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Profile::Zero => write!(f, "zero"),
            Profile::Gaussian { amplitude, sigma } => write!(f, "gaussian(A={amplitude},sigma={sigma})"),
            Profile::Bump {
                amplitude,
                inner,
                outer,
            } => {
                write!(f, "bump(A={amplitude},inner={inner},outer={outer})")
            }
            Profile::Tail { amplitude, q } => write!(f, "tail(A={amplitude},q={q})"),
        }
    }
}

/// Position and velocity profiles `(φ₀, φ₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData {
    pub position: Profile,
    pub velocity: Profile,
}

impl InitialData {
    pub fn new(position: Profile, velocity: Profile) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Profile) -> Self {
        Self {
            position,
            velocity: Profile::Zero,
        }
    }

    pub fn zero() -> Self {
        Self::at_rest(Profile::Zero)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            position: self.position.scaled(factor),
            velocity: self.velocity.scaled(factor),
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.position.support_radius().max(self.velocity.support_radius())
    }

    pub fn is_zero(&self) -> bool {
        self.position.is_zero() && self.velocity.is_zero()
    }

    /// Slowest algebraic decay rate among tail components.
    pub fn tail_rate(&self) -> Option<f64> {
        match (self.position.tail_rate(), self.velocity.tail_rate()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "position={};velocity={}", self.position, self.velocity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn numeric_moment(p: &Profile, x: f64) -> f64 {
        let gl = GaussLegendre::new(64);
        let n = 64;
        (0..n)
            .map(|k| {
                let a = x * k as f64 / n as f64;
                let b = x * (k + 1) as f64 / n as f64;
                gl.integrate(a, b, |s| s * p.value(s))
            })
            .sum()
    }

    #[test]
    fn moments_match_quadrature() {
        let profiles = [
            Profile::gaussian(1.3, 0.7).unwrap(),
            Profile::bump(2.0, 1.0, 2.5).unwrap(),
            Profile::tail(0.5, 2.5).unwrap(),
            Profile::tail(0.5, 2.0).unwrap(),
            Profile::tail(0.5, 1.0).unwrap(),
        ];
        for p in &profiles {
            for x in [0.0, 0.3, 1.2, 2.0, 3.7] {
                assert_relative_eq!(
                    p.first_moment(x),
                    numeric_moment(p, x),
                    epsilon = 1e-12,
                    max_relative = 1e-11
                );
                assert_eq!(p.first_moment(-x), p.first_moment(x));
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let profiles = [
            Profile::gaussian(1.3, 0.7).unwrap(),
            Profile::bump(2.0, 1.0, 2.5).unwrap(),
            Profile::tail(0.5, 2.5).unwrap(),
        ];
        let h = 1e-6;
        for p in &profiles {
            for r in [0.1, 0.9, 1.4, 2.2, 3.0] {
                let fd = (p.value(r + h) - p.value(r - h)) / (2.0 * h);
                assert!((fd - p.derivative(r)).abs() < 1e-7, "{p} at {r}");
            }
        }
    }

    #[test]
    fn bump_support_and_peak() {
        let b = Profile::bump(1.0, 1.0, 2.0).unwrap();
        assert_eq!(b.value(0.5), 0.0);
        assert_eq!(b.value(2.5), 0.0);
        assert_relative_eq!(b.value(1.5), 1.0, epsilon = 1e-15);
        assert!(Profile::bump(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn scaling() {
        let g = Profile::gaussian(1.0, 1.0).unwrap().scaled(3.0);
        assert_relative_eq!(g.value(0.5), 3.0 * (-0.25f64).exp());
    }
}
