//! Numeric scalar abstraction shared by the simulator.
//!
//! Everything that touches weights, activations or device state is generic
//! over [`Scalar`]; `f64` is the reference type and `f32` the fast one.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or config value.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_f64() {
        assert_eq!(f64::of(0.25).as_f64(), 0.25);
        assert_eq!(f32::of(0.25).as_f64(), 0.25);
        assert!(f32::of(1e-3) > 0.0);
    }
}
