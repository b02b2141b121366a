use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalars the spectral code runs on: `f32` or `f64`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Serialize + DeserializeOwned
{
    /// Zero-eigenvalue threshold appropriate for the precision.
    fn default_tol() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Scalar for f32 {
    fn default_tol() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn default_tol() -> Self {
        1e-9
    }
}
