use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Floating point scalar used by every numeric kernel: `f32` or `f64`.
pub trait Real: Pixel + Float + FloatConst + FromPrimitive + NumCast + Sum + Display {
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Pixel element stored in a [`Raster`](crate::Raster).
pub trait Pixel: Copy + PartialEq + Default + Debug + Send + Sync + 'static {
    fn value_f64(self) -> f64;
}

impl Pixel for u8 {
    fn value_f64(self) -> f64 {
        self as f64
    }
}

impl Pixel for u32 {
    fn value_f64(self) -> f64 {
        self as f64
    }
}

impl Pixel for f32 {
    fn value_f64(self) -> f64 {
        self as f64
    }
}

impl Pixel for f64 {
    fn value_f64(self) -> f64 {
        self
    }
}
