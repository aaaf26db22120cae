//! Scalar abstraction shared by the link oracle, the surrogate and the search.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the numerical core is written against: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant. Never fails for finite inputs on `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// dBm → W.
#[inline]
pub fn dbm_to_watt<T: Scalar>(dbm: T) -> T {
    T::lit(1e-3) * T::lit(10.0).powf(dbm / T::lit(10.0))
}

/// W → dBm.
#[inline]
pub fn watt_to_dbm<T: Scalar>(w: T) -> T {
    T::lit(10.0) * (w / T::lit(1e-3)).log10()
}

/// dB → linear power ratio.
#[inline]
pub fn db_to_lin<T: Scalar>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

#[inline]
pub fn lin_to_db<T: Scalar>(lin: T) -> T {
    T::lit(10.0) * lin.log10()
}
