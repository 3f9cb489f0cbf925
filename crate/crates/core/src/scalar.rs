//! Generic scalar abstraction: all core math runs over `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used throughout the crate.
///
/// Training instantiates `f32`; finite-difference gradient checks use `f64`
/// for headroom beyond float32 noise.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless widening for accumulation-sensitive paths.
    fn dbl(self) -> f64;
    /// Conversion from `f64` (possibly narrowing).
    fn of(v: f64) -> Self;
    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn dbl(self) -> f64 {
        self as f64
    }
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn dbl(self) -> f64 {
        self
    }
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
}

/// Shorthand for `T::of` in formula-heavy code.
#[inline]
pub fn s<T: Scalar>(v: f64) -> T {
    T::of(v)
}
