//! Small numerical kernels shared by the spectral solvers.

pub mod extrapolate;
pub mod quad;

pub use extrapolate::{richardson_to_zero, Extrapolation};
pub use quad::{integrate, QuadOptions, QuadResult};

/// Gamma function on the positive reals (and the non-integer negatives).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}
