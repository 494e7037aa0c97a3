//! Radially symmetric simulation of the defocusing semilinear wave equation
//!
//! ```text
//! ∂_t²φ − Δφ + |φ|^{p−1}φ = 0,   1 < p < 5,   (t, x) ∈ ℝ^{1+3}
//! ```
//!
//! together with the weighted energies, cone fluxes, conformal
//! compactification and decay-rate diagnostics used to check pointwise
//! decay estimates for its solutions.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: null coordinates, backward-cone and hyperboloid geometry.
//! * [`quadrature`]: Gauss–Legendre rules with endpoint refinement.
//! * [`profiles`]: radial initial data.
//! * [`solver`]: leapfrog evolution of ψ = rφ and the exact linear solution.
//! * [`energies`]: conserved/weighted energies, fluxes and multiplier audits.
//! * [`lemma_oracles`]: brute-force checks of the sphere-integration bounds.
//! * [`conformal`]: the hyperboloidal conformal map and transformed equation.
//! * [`analysis`]: decay fits, the representation formula, scattering threshold.
//! * [`verify`]: the acceptance suites shared by the CLI and the test target.

pub mod analysis;
pub mod conformal;
pub mod energies;
pub mod error;
pub mod geometry;
pub mod lemma_oracles;
pub mod profiles;
pub mod quadrature;
pub mod snapshot;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
