//! Scalar abstraction shared by every numeric module.
//!
//! All math in this crate is written against [`Real`], which is satisfied by
//! `f32` and `f64`. File formats and evaluation harnesses work in `f64`.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    RealField + Copy + ToPrimitive + Serialize + DeserializeOwned + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a working scalar back to `f64` for reporting and export.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    // f32/f64 always convert
    x.to_f64().unwrap_or(f64::NAN)
}
