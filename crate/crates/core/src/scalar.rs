//! Floating-point scalar abstraction.
//!
//! All core math is generic over [`Scalar`], which is any IEEE float that
//! rustfft can transform (f32 or f64). Concrete type aliases for the f64
//! instantiation live at the crate root.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssign + rustfft::FftNum + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting an f64 literal into the generic scalar.
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("literal conversion")
}

/// Converts a usize into the generic scalar.
#[inline]
pub fn from_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize conversion")
}
