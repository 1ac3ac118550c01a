//! Floating-point abstraction used by the voxel math.
//!
//! Every probability, logit and uncertainty routine is written once against
//! [`Scalar`] and instantiated for `f32` (the on-disk type) and `f64`.
//! Reductions (means, bin sums, squared errors) always accumulate in `f64`
//! regardless of the voxel type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Send + Sync + Debug + Display + Default + 'static
{
    /// Largest representable value strictly below one half.
    fn below_half() -> Self {
        Self::from_f64(0.5).unwrap() - Self::epsilon() / Self::from_f64(4.0).unwrap()
    }

    #[inline]
    fn of(v: f64) -> Self {
        // lossless for f64, correctly rounded for f32
        Self::from_f64(v).unwrap()
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_half_is_predecessor() {
        let h32 = f32::below_half();
        assert!(h32 < 0.5);
        assert_eq!(f32::from_bits(h32.to_bits() + 1), 0.5);
        let h64 = f64::below_half();
        assert!(h64 < 0.5);
        assert_eq!(f64::from_bits(h64.to_bits() + 1), 0.5);
    }
}
