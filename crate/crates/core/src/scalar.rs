//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the engine, model and estimators are generic over.
///
/// Implemented for `f32` and `f64`. Randomness and file formats go through
/// `f64` so that a given seed produces the same draws regardless of `T`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; exact for values that originated as `Self`.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite scalar converts to f64")
    }

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trips_through_f64() {
        let x = 0.1f32;
        assert_eq!(f32::of(x.as_f64()).to_bits(), x.to_bits());
    }

    #[test]
    fn usize_conversion() {
        assert_eq!(f64::of_usize(7), 7.0);
        assert_eq!(f32::of_usize(3), 3.0);
    }
}
