//! Scalar abstraction for the numerics layer.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type usable in tensors and autodiff graphs.
///
/// Blanket-implemented for anything float-like; in practice `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for literals in generic code.
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("float literal conversion")
    }

    /// Widening conversion to `f64`, for reporting and reductions in tests.
    fn to_f64_lit(self) -> f64 {
        self.to_f64().expect("float widening conversion")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}
