//! Scalar abstraction for the numeric core.
//!
//! Every statistical routine in this crate is generic over [`Real`], a thin
//! bundle of the arithmetic/formatting bounds the algorithms need. Both
//! `f32` and `f64` satisfy it; the crate-root type aliases pin `f64` as the
//! working precision for the pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the statistical kernels.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + 'static
{
    /// Convert a nonnegative count into the scalar type.
    ///
    /// Counts in this crate are dataset sizes (well below 2^53), so the
    /// conversion is exact for `f64` and close enough for `f32` diagnostics.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Shorthand for a literal constant expressed in `f64`.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// ½, used pervasively by the t-distribution kernels.
    fn half() -> Self {
        Self::c(0.5)
    }

    /// 2, used by doubling searches and two-sided tails.
    fn two() -> Self {
        Self::c(2.0)
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<T>
        + Debug
        + Display
        + 'static
{
}
