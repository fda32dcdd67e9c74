//! Floating point scalar used throughout the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every finite `f64` is representable
    /// (possibly rounded) in both implementors.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
