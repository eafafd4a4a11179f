//! Scalar abstraction for the numeric core.
//!
//! Every tensor, layer and model is generic over [`Scalar`]. The crate root
//! exposes `f64` aliases, which is what the training pipeline and the
//! gradient checks run on; `f32` instantiations are available for cheaper
//! inference.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tag written into model files so a payload is reloaded at the width it was trained at.
    const TAG: &'static str;

    #[inline]
    fn of(v: f64) -> Self {
        // Infallible for the two implementors below.
        Self::from_f64(v).unwrap()
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f64 {
    const TAG: &'static str = "f64";
}

impl Scalar for f32 {
    const TAG: &'static str = "f32";
}
