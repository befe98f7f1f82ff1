//! Radially symmetric prescribed mean curvature problem on a ball,
//!
//! ```text
//! -div( grad u / sqrt(1 + |grad u|^2) ) = H(r) + lambda * u^p   in B_R,
//!  u = 0                                                       on dB_R,
//! ```
//!
//! solved on a node-centred finite-volume grid in the radial variable.
//!
//! The crate computes the minimal solution branch by monotone Picard
//! iteration, brackets the extremal parameter `lambda*` by bisection,
//! tracks the first eigenvalue of the linearized operator, and follows the
//! solution curve through the fold by pseudo-arclength continuation to reach
//! the second (upper) branch. The [`diagnostics`] module evaluates a-priori
//! estimates (ball flux condition, gradient bounds near the origin and the
//! boundary, the equation satisfied by `sqrt(1 + u_r^2)`) on computed
//! profiles.
//!
//! Every solver shares one discretization: the flux through the sphere of
//! radius `r_{i+1/2}` balances the volume integral of the right-hand side
//! over the dual cells inside it. The Picard step inverts that balance in
//! closed form, and Newton linearizes it, so both methods converge to the
//! same discrete solutions.

pub mod config;
pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod linalg;
pub mod linearized;
pub mod minimal;
pub mod problem;
pub mod radial;

pub mod cli;

pub use error::{Error, Result};
pub use problem::{CurvatureField, ProblemSpec, Tolerances};
pub use radial::{Profile, RadialGrid};

/// Surface measure of the unit sphere in `R^n` (the factor `n * omega_n`).
pub fn unit_sphere_area(n: u32) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / f64::from(n - 2) * unit_sphere_area(n - 2),
    }
}
