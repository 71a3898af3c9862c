//! Scalar abstraction so the segment engine runs either in plain `f64`
//! (with Neumaier-compensated accumulation) or in double-double.

use super::dd::Dd;
use super::sum::NeumaierSum;
use num_bigint::BigUint;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Precision mode selected by callers; `Extended` is the 106-bit path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    Double,
    Extended,
}

impl Precision {
    pub fn label(self) -> &'static str {
        match self {
            Precision::Double => "double",
            Precision::Extended => "extended",
        }
    }
}

pub trait Real:
    Copy
    + PartialOrd
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    type Acc: Accumulator<Self>;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn from_dd(x: Dd) -> Self;
    fn to_f64(self) -> f64;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;
    /// Natural log of an exact big integer (>= 1).
    fn ln_biguint(n: &BigUint) -> Self;
}

pub trait Accumulator<T>: Default {
    fn add(&mut self, x: T);
    fn total(&self) -> T;
}

impl Accumulator<f64> for NeumaierSum {
    #[inline]
    fn add(&mut self, x: f64) {
        NeumaierSum::add(self, x);
    }
    #[inline]
    fn total(&self) -> f64 {
        NeumaierSum::total(self)
    }
}

#[derive(Default)]
pub struct DdSum(Dd);

impl Accumulator<Dd> for DdSum {
    #[inline]
    fn add(&mut self, x: Dd) {
        self.0 += x;
    }
    #[inline]
    fn total(&self) -> Dd {
        self.0
    }
}

impl Real for f64 {
    type Acc = NeumaierSum;

    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn from_dd(x: Dd) -> f64 {
        x.to_f64()
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn ln_biguint(n: &BigUint) -> f64 {
        ln_biguint_dd(n).to_f64()
    }
}

impl Real for Dd {
    type Acc = DdSum;

    fn zero() -> Dd {
        Dd::ZERO
    }
    fn one() -> Dd {
        Dd::ONE
    }
    fn from_f64(x: f64) -> Dd {
        Dd::from_f64(x)
    }
    fn from_dd(x: Dd) -> Dd {
        x
    }
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    fn ln(self) -> Dd {
        Dd::ln(self)
    }
    fn exp(self) -> Dd {
        Dd::exp(self)
    }
    fn abs(self) -> Dd {
        Dd::abs(self)
    }
    fn ln_biguint(n: &BigUint) -> Dd {
        ln_biguint_dd(n)
    }
}

/// ln of a positive big integer, exact to double-double accuracy.
///
/// The integer is split as `top * 2^shift` with `top` holding the leading
/// <= 96 bits (exactly representable in a double-double), so the result's
/// absolute error stays near 1 ulp even for million-bit inputs.
pub fn ln_biguint_dd(n: &BigUint) -> Dd {
    let bits = n.bits();
    assert!(bits > 0, "ln of zero");
    let shift = bits.saturating_sub(96);
    let top = n >> shift;
    let digits = top.to_u64_digits();
    let mut v = Dd::ZERO;
    // Horner over 64-bit limbs; each limb split into two exact 32-bit halves.
    for &limb in digits.iter().rev() {
        v = v.ldexp(64);
        let hi32 = (limb >> 32) as f64;
        let lo32 = (limb & 0xffff_ffff) as f64;
        v += Dd::from_f64(hi32).ldexp(32) + Dd::from_f64(lo32);
    }
    v.ln() + Dd::LN2 * Dd::from_f64(shift as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_traits::One;

    #[test]
    fn ln_biguint_small() {
        for k in [1u64, 2, 3, 10, 12345, u64::MAX] {
            let got = ln_biguint_dd(&BigUint::from(k)).to_f64();
            let want = (k as f64).ln();
            assert!((got - want).abs() <= 1e-13 * want.max(1.0), "k={k}");
        }
    }

    #[test]
    fn ln_biguint_huge_power_of_two() {
        let n = BigUint::one() << 100_000u32;
        let got = ln_biguint_dd(&n);
        let want = Dd::LN2 * Dd::from_f64(100_000.0);
        assert!((got - want).abs().to_f64() < 1e-16);
    }
}
