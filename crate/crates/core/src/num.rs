//! Scalar abstraction: everything in this crate is generic over a real
//! scalar implementing [`Real`]. `f32` and `f64` qualify; the crate root
//! exports `f64` type aliases for the common case.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type the whole crate is generic over.
pub trait Real: RealField + ToPrimitive + FromPrimitive + Copy {}

impl<T: RealField + ToPrimitive + FromPrimitive + Copy> Real for T {}

/// Convert an `f64` constant into the working scalar.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// Stochasticity / stationarity tolerance used throughout validation.
#[inline]
pub fn stochastic_tol<T: Real>() -> T {
    real(1e-12)
}
