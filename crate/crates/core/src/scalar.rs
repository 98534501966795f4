//! Floating-point abstraction shared by the one-body numerics.
//!
//! The disorder, spectral and quasi-free modules are written against [`Real`]
//! so the same code runs in `f32` (quick sweeps) and `f64` (everything that is
//! checked against tolerances). Ensemble statistics and the many-body oracle
//! are `f64` only.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_index(i: usize) -> Self {
        Self::from_usize(i).expect("index fits in scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
