//! Floating-point scalar abstraction shared by the exact engine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Probability weight type: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Weights strictly below this are moved to the leak ledger after a convolution.
    fn drop_floor() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl Scalar for f32 {
    fn drop_floor() -> Self {
        f32::MIN_POSITIVE
    }
}

impl Scalar for f64 {
    fn drop_floor() -> Self {
        1e-300
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
pub(crate) fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
