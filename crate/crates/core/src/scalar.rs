//! Scalar abstraction: the whole pipeline is generic over the floating type.
//!
//! Training and oracle tests run at f64; f32 is supported for grid
//! extraction where its relaxed tolerance is acceptable. `RealField`
//! supplies the transcendental math; the num-traits casts handle
//! conversions, wrapped in infallible helpers with non-colliding names.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate: f32 or f64.
pub trait Real:
    nalgebra::RealField
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy-but-total conversion from an f64 constant.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to scalar")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize converts to scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_mean<T: Real>(xs: &[T]) -> T {
        let sum = xs.iter().fold(T::zero(), |a, &b| a + b);
        sum / T::of_usize(xs.len())
    }

    #[test]
    fn conversions_roundtrip() {
        assert_eq!(f32::of(0.5).as_f64(), 0.5);
        assert_eq!(f64::of_usize(7), 7.0);
        let m = generic_mean(&[1.0f64, 2.0, 3.0]);
        assert_eq!(m, 2.0);
    }
}
