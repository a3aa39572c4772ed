//! Scalar abstraction: the numeric core is generic over `Real`,
//! instantiated as `f64` throughout the pipeline and as `f32` where a
//! caller prefers it.

use num_traits::{Float, FromPrimitive};

use crate::special;

/// Floating-point scalar with the special functions the bounds need.
pub trait Real: Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static {
    fn erf(self) -> Self;
    fn erfc(self) -> Self;

    /// Lift an `f64` constant into the scalar type.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    fn to_f64_lossy(self) -> f64;

    fn ln10() -> Self {
        Self::c(std::f64::consts::LN_10)
    }

    fn sqrt2() -> Self {
        Self::c(std::f64::consts::SQRT_2)
    }

    /// Standard normal density.
    fn norm_pdf(self) -> Self {
        Self::c(special::norm_pdf(self.to_f64_lossy()))
    }

    /// Standard normal CDF.
    fn norm_cdf(self) -> Self {
        Self::c(special::norm_cdf(self.to_f64_lossy()))
    }

    /// Upper-tail probability 1 - Phi(x).
    fn norm_sf(self) -> Self {
        Self::c(special::norm_sf(self.to_f64_lossy()))
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        special::erf(self)
    }
    fn erfc(self) -> Self {
        special::erfc(self)
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        special::erf(self as f64) as f32
    }
    fn erfc(self) -> Self {
        special::erfc(self as f64) as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}
