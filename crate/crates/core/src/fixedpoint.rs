//! Q4.11 parameters/activations with a Q8.22 accumulator.
//!
//! All conversions round half to even and saturate; nothing wraps.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAC_BITS: u32 = 11;
pub const INT_BITS: u32 = 4;
const SCALE: f64 = (1u32 << FRAC_BITS) as f64;
const ACC_SCALE: f64 = (1u64 << (2 * FRAC_BITS)) as f64;

/// Integer/fraction split recorded in the weights file header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub int_bits: u8,
    pub frac_bits: u8,
}

impl QFormat {
    pub const Q4_11: QFormat = QFormat {
        int_bits: INT_BITS as u8,
        frac_bits: FRAC_BITS as u8,
    };
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

/// Signed 16-bit fixed point, value = raw / 2^11.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fx16(pub i16);

impl fmt::Debug for Fx16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fx16({})", dequantize(*self))
    }
}

impl Fx16 {
    pub const ZERO: Fx16 = Fx16(0);
    pub const ONE: Fx16 = Fx16(1 << FRAC_BITS);
    pub const MIN: Fx16 = Fx16(i16::MIN);
    pub const MAX: Fx16 = Fx16(i16::MAX);
    /// Smallest positive step, 2^-11.
    pub const EPSILON: f64 = 1.0 / SCALE;

    pub fn from_bits(bits: u16) -> Self {
        Fx16(bits as i16)
    }

    /// The storage pattern that gets encoded and flipped.
    pub fn to_bits(self) -> u16 {
        self.0 as u16
    }

    pub fn to_f64(self) -> f64 {
        dequantize(self)
    }
}

/// Q8.22 accumulator.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Acc32(pub i32);

impl fmt::Debug for Acc32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Acc32({})", self.to_f64())
    }
}

impl Acc32 {
    pub const ZERO: Acc32 = Acc32(0);

    /// Widens a Q4.11 value into the accumulator format (exact).
    pub fn from_fx(v: Fx16) -> Self {
        Acc32(i32::from(v.0) << FRAC_BITS)
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / ACC_SCALE
    }

    pub fn saturating_add(self, other: Acc32) -> Acc32 {
        Acc32(self.0.saturating_add(other.0))
    }
}

fn saturate_i16(v: i64) -> i16 {
    v.clamp(i64::from(i16::MIN), i64::from(i16::MAX)) as i16
}

/// Nearest Q4.11 value, ties to even, saturating at the format bounds.
pub fn quantize(x: f64) -> Result<Fx16> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    Ok(quantize_saturating(x))
}

pub(crate) fn quantize_saturating(x: f64) -> Fx16 {
    if x.is_nan() {
        return Fx16::ZERO;
    }
    let scaled = (x * SCALE).round_ties_even();
    Fx16(scaled.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
}

pub fn dequantize(v: Fx16) -> f64 {
    f64::from(v.0) / SCALE
}

/// `acc + a*b`; the product of two Q4.11 values is exact in Q8.22.
#[inline]
pub fn mac(acc: Acc32, a: Fx16, b: Fx16) -> Acc32 {
    Acc32(acc.0.saturating_add(i32::from(a.0) * i32::from(b.0)))
}

/// Rounds Q8.22 back to Q4.11, ties to even, saturating.
#[inline]
pub fn acc_to_fx(acc: Acc32) -> Fx16 {
    let v = i64::from(acc.0);
    let floor = v >> FRAC_BITS;
    let rem = v & ((1 << FRAC_BITS) - 1);
    let half = 1 << (FRAC_BITS - 1);
    let rounded = if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    };
    Fx16(saturate_i16(rounded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0).unwrap(), Fx16(0));
        assert_eq!(quantize(1.0).unwrap(), Fx16(2048));
        assert_eq!(quantize(100.0).unwrap(), Fx16(32767));
        assert_eq!(quantize(-100.0).unwrap(), Fx16(-32768));
        assert_eq!(quantize(-16.0).unwrap(), Fx16::MIN);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        assert!(matches!(quantize(f64::NAN), Err(Error::NonFinite(_))));
        assert!(quantize(f64::INFINITY).is_err());
        assert!(quantize(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn quantize_ties_to_even() {
        // 0.5 ulp and 1.5 ulp
        assert_eq!(quantize(0.5 / 2048.0).unwrap(), Fx16(0));
        assert_eq!(quantize(1.5 / 2048.0).unwrap(), Fx16(2));
        assert_eq!(quantize(-0.5 / 2048.0).unwrap(), Fx16(0));
        assert_eq!(quantize(-1.5 / 2048.0).unwrap(), Fx16(-2));
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(Fx16(2048)), 1.0);
        assert_eq!(dequantize(Fx16(-2048)), -1.0);
    }

    #[test]
    fn round_trip_all_raw_values() {
        for raw in i16::MIN..=i16::MAX {
            let v = Fx16(raw);
            assert_eq!(quantize(dequantize(v)).unwrap(), v);
        }
    }

    #[test]
    fn mac_examples() {
        let one = quantize(1.0).unwrap();
        let half = quantize(0.5).unwrap();
        assert_eq!(mac(Acc32::ZERO, one, one).to_f64(), 1.0);
        assert_eq!(mac(Acc32::ZERO, half, half).to_f64(), 0.25);
    }

    #[test]
    fn mac_matches_double_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100_000 {
            let a = Fx16(rng.gen());
            let b = Fx16(rng.gen());
            let got = mac(Acc32::ZERO, a, b).to_f64();
            let want = dequantize(a) * dequantize(b);
            assert!((got - want).abs() <= 2f64.powi(-21), "{a:?} * {b:?}");
        }
    }

    #[test]
    fn mac_saturates() {
        let big = Acc32(i32::MAX - 10);
        assert_eq!(mac(big, Fx16::MAX, Fx16::MAX), Acc32(i32::MAX));
        let small = Acc32(i32::MIN + 10);
        assert_eq!(mac(small, Fx16::MAX, Fx16::MIN), Acc32(i32::MIN));
    }

    #[test]
    fn acc_to_fx_examples() {
        let acc = |x: f64| Acc32((x * ACC_SCALE) as i32);
        assert_eq!(acc_to_fx(acc(1.0)), Fx16(2048));
        assert_eq!(acc_to_fx(acc(20.0)), Fx16(32767));
        assert_eq!(acc_to_fx(acc(-20.0)), Fx16(-32768));
        // ties: 0.5 ulp -> 0, 1.5 ulp -> 2, -0.5 ulp -> 0
        assert_eq!(acc_to_fx(Acc32(1024)), Fx16(0));
        assert_eq!(acc_to_fx(Acc32(3 * 1024)), Fx16(2));
        assert_eq!(acc_to_fx(Acc32(-1024)), Fx16(0));
        assert_eq!(acc_to_fx(Acc32(-3 * 1024)), Fx16(-2));
        assert_eq!(acc_to_fx(Acc32(1025)), Fx16(1));
    }

    #[test]
    fn acc_from_fx_is_exact() {
        for raw in (i16::MIN..=i16::MAX).step_by(97) {
            assert_eq!(acc_to_fx(Acc32::from_fx(Fx16(raw))), Fx16(raw));
        }
    }

    proptest! {
        #[test]
        fn quantization_error_is_half_ulp(x in -16.0f64..(16.0 - 1.0 / 2048.0)) {
            let err = (dequantize(quantize(x).unwrap()) - x).abs();
            prop_assert!(err <= 2f64.powi(-12));
        }

        #[test]
        fn quantize_is_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize(lo).unwrap() <= quantize(hi).unwrap());
        }

        #[test]
        fn acc_to_fx_never_wraps(raw in any::<i32>()) {
            let v = acc_to_fx(Acc32(raw)).to_f64();
            let exact = f64::from(raw) / ACC_SCALE;
            prop_assert!((-16.0..=16.0).contains(&v));
            if exact.abs() < 15.0 {
                prop_assert!((v - exact).abs() <= 2f64.powi(-12));
            }
        }
    }
}
