//! Floating-point scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar the solvers are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Tolerance used when checking that a probability vector sums to one.
    const SIMPLEX_TOL: f64;

    /// Absolute gap below which two scores count as tied.
    const TIE_TOL: f64;

    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal must convert")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const SIMPLEX_TOL: f64 = 1e-5;
    const TIE_TOL: f64 = 1e-6;
}

impl Scalar for f64 {
    const SIMPLEX_TOL: f64 = 1e-9;
    const TIE_TOL: f64 = 1e-12;
}
