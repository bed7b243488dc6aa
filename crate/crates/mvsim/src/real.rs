//! Scalar abstraction so the solver core works with either f32 or f64.

use num_traits::{Float, FromPrimitive, NumAssignOps};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Floating-point scalar used throughout the solver.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an f64 constant; panics only for non-finite inputs on exotic types.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    fn half() -> Self {
        Self::of(0.5)
    }

    fn two() -> Self {
        Self::of(2.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}
