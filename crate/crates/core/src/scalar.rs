//! Scalar abstractions shared by every numeric routine in the crate.
//!
//! [`Scalar`] covers field arithmetic with ordering and is satisfied by the
//! exact rational type as well as `f32`/`f64`. Anything needing
//! transcendental functions or square roots asks for [`Real`] instead.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Ordered field element usable for blendshape coefficients.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Lossy conversion from `f64`. Panics only if the target type cannot
    /// represent the value at all (non-finite input into a rational).
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("value not representable in scalar type")
    }

    /// Lossy conversion to `f64` used for I/O and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("index not representable in scalar type")
    }

    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating point scalar (`f32` or `f64`).
pub trait Real: Scalar + Float + FloatConst {}

impl Real for f32 {}
impl Real for f64 {}
