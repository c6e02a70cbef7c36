//! Scalar abstraction shared by every trainable component.
//!
//! The dense engine and the heads built on it are generic over [`Scalar`],
//! which is implemented for `f32` and `f64`. Gradient verification runs in
//! `f64`; training defaults to `f32` for throughput.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`, used for literals and initialization draws.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Short name recorded in checkpoints.
    const NAME: &'static str;
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    const NAME: &'static str = "f64";
}
