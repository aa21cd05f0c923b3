//! Numeric types the inference engine can run on.
//!
//! [`Fx16`] is the deployment type: every parameter is a 16-bit pattern that
//! can be protected and flipped. Floating-point instantiations serve as the
//! reference path for fidelity checks.

use std::fmt::Debug;

use num_traits::Float;

use crate::fixedpoint::{self, Acc32, Fx16};

pub trait Scalar: Copy + PartialOrd + Default + Debug + Send + Sync + 'static {
    /// Accumulator used for dot products.
    type Acc: Copy + Send + Sync;

    fn zero() -> Self;

    /// Nearest representable value. Out-of-range inputs saturate for
    /// bounded formats.
    fn from_real(x: f64) -> Self;

    fn to_real(self) -> f64;

    /// Accumulator preloaded with a bias term.
    fn acc_init(bias: Self) -> Self::Acc;

    fn mac(acc: Self::Acc, a: Self, b: Self) -> Self::Acc;

    fn finish(acc: Self::Acc) -> Self;

    #[inline]
    fn relu(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }
}

impl Scalar for Fx16 {
    type Acc = Acc32;

    #[inline]
    fn zero() -> Self {
        Fx16::ZERO
    }

    fn from_real(x: f64) -> Self {
        fixedpoint::quantize_saturating(x)
    }

    fn to_real(self) -> f64 {
        fixedpoint::dequantize(self)
    }

    #[inline]
    fn acc_init(bias: Self) -> Acc32 {
        Acc32::from_fx(bias)
    }

    #[inline]
    fn mac(acc: Acc32, a: Self, b: Self) -> Acc32 {
        fixedpoint::mac(acc, a, b)
    }

    #[inline]
    fn finish(acc: Acc32) -> Self {
        fixedpoint::acc_to_fx(acc)
    }
}

impl<F> Scalar for F
where
    F: Float + Default + Debug + Send + Sync + 'static,
{
    type Acc = F;

    #[inline]
    fn zero() -> Self {
        F::zero()
    }

    fn from_real(x: f64) -> Self {
        F::from(x).unwrap_or_else(F::nan)
    }

    fn to_real(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn acc_init(bias: Self) -> F {
        bias
    }

    #[inline]
    fn mac(acc: F, a: Self, b: Self) -> F {
        a.mul_add(b, acc)
    }

    #[inline]
    fn finish(acc: F) -> Self {
        acc
    }
}
