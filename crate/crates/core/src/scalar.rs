//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + Signed + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot hold it,
    /// which never happens for `f32`/`f64`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Weights of a measure. Only ordered-field operations are needed, so exact
/// rationals qualify alongside floats.
pub trait Weight: Clone + PartialOrd + Debug + Num + Signed + Send + Sync + 'static {}

impl<T: Clone + PartialOrd + Debug + Num + Signed + Send + Sync + 'static> Weight for T {}
