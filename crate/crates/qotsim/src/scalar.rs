//! Generic floating-point scalar, implemented for `f32` and `f64`.
//!
//! All amplitude and matrix arithmetic in this crate is written against
//! [`Real`] so the same code runs in single or double precision. Tolerances
//! scale with the precision of the scalar: identities that hold to 1e-12 in
//! f64 cannot be expected from f32 arithmetic.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar for amplitudes, probabilities and matrix entries.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Absolute tolerance for identities that are exact up to rounding
    /// (norm preservation, trace normalization, entrywise matrix equality).
    fn exact_tol() -> Self;

    /// Looser tolerance for eigenvalue- and singular-value-mediated
    /// quantities, where iterative solvers add a few digits of noise.
    fn spectral_tol() -> Self;

    /// Lossy conversion from `f64`, for constants baked into the algorithms.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant converts to any Real")
    }
}

impl Real for f64 {
    fn exact_tol() -> Self {
        1e-12
    }
    fn spectral_tol() -> Self {
        1e-10
    }
}

impl Real for f32 {
    fn exact_tol() -> Self {
        1e-4
    }
    fn spectral_tol() -> Self {
        1e-3
    }
}
