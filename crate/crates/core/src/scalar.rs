//! Scalar abstraction: every numeric routine in this crate is generic over
//! the floating-point type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Floating-point element type for matrices, vectors, and objectives.
///
/// Implemented for `f32` and `f64` through the blanket impl; the crate root
/// exports concrete type aliases for both.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant (tolerance, default, literal) into `Self`.
    fn cast(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("constant must be representable in the scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + ScalarOperand
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips_exact_constants() {
        assert_eq!(<f64 as Scalar>::cast(0.5), 0.5);
        assert_eq!(<f32 as Scalar>::cast(0.25), 0.25f32);
    }
}
