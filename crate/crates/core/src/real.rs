use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign, NumCast};

/// Floating point scalar used by the scalar-generic parts of the crate.
pub trait Real:
    Float + FloatConst + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal representable in target float")
    }

    #[inline]
    fn from_usize(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("integer representable in target float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
