//! Scalar abstraction shared by every formula in the crate.
//!
//! Scores, gaps, dependency strengths and difficulties are all unitless reals
//! in `[0, 1]`. The math is written once against [`Scalar`] and instantiated
//! for `f32` and `f64`; the crate root exposes `f64` aliases.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the scoring and planning math.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot represent.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn clamp_unit(self) -> Self {
        if self.is_nan() {
            return Self::zero();
        }
        self.max(Self::zero()).min(Self::one())
    }

    /// Arithmetic mean; `None` for an empty iterator.
    fn mean<I: IntoIterator<Item = Self>>(values: I) -> Option<Self> {
        let (sum, n) = values
            .into_iter()
            .fold((Self::zero(), 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / Self::of_usize(n))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
