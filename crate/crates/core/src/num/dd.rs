//! Double-double arithmetic: an unevaluated sum of two `f64`s giving a
//! ~106-bit mantissa. Algorithms follow the classic QD library
//! (Hida, Li, Bailey), using FMA for exact products.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Extended-precision scalar: value = `hi + lo` with |lo| <= ulp(hi)/2.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = f64::mul_add(a, b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// ln(2) to double-double precision.
    pub const LN2: Dd = Dd {
        hi: 6.931471805599453e-1,
        lo: 2.3190468138462996e-17,
    };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Dd {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact sum of two doubles.
    #[inline]
    pub fn from_sum(a: f64, b: f64) -> Dd {
        let (s, e) = two_sum(a, b);
        Dd { hi: s, lo: e }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn from_prod(a: f64, b: f64) -> Dd {
        let (p, e) = two_prod(a, b);
        Dd { hi: p, lo: e }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }

    /// Multiply by an exact power of two (error-free).
    #[inline]
    pub fn ldexp(self, e: i32) -> Dd {
        Dd {
            hi: libm_ldexp(self.hi, e),
            lo: libm_ldexp(self.lo, e),
        }
    }

    pub fn sqr(self) -> Dd {
        let (p1, mut p2) = two_prod(self.hi, self.hi);
        p2 += 2.0 * self.hi * self.lo;
        p2 += self.lo * self.lo;
        let (s, e) = quick_two_sum(p1, p2);
        Dd { hi: s, lo: e }
    }

    /// exp(self), accurate to ~1 ulp of double-double.
    pub fn exp(self) -> Dd {
        // exp(512 r + m ln2) = 2^m (exp(r))^512 with |r| <= ln2/1024.
        const K: f64 = 512.0;
        const INV_K: f64 = 1.0 / 512.0;
        if self.hi <= -746.0 {
            return Dd::ZERO;
        }
        if self.hi >= 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.is_zero() {
            return Dd::ONE;
        }
        let m = (self.hi / Dd::LN2.hi + 0.5).floor();
        let r = (self - Dd::LN2 * Dd::from_f64(m)) * Dd::from_f64(INV_K);
        // Taylor series for exp(r) - 1.
        let mut p = r.sqr();
        let mut s = r + p * Dd::from_f64(0.5);
        p = p * r;
        let mut t = p * INV_FACT[0];
        let eps = 1.23e-32 / K;
        let mut i = 0usize;
        loop {
            s = s + t;
            p = p * r;
            i += 1;
            if i >= INV_FACT.len() {
                break;
            }
            t = p * INV_FACT[i];
            if t.hi.abs() <= eps {
                s = s + t;
                break;
            }
        }
        // Undo the 1/512 scaling: (1+s) -> (1+s)^2 via s <- 2s + s^2.
        for _ in 0..9 {
            s = s * Dd::from_f64(2.0) + s.sqr();
        }
        s = s + Dd::ONE;
        s.ldexp(m as i32)
    }

    /// Natural log; `self` must be positive and finite.
    pub fn ln(self) -> Dd {
        debug_assert!(self.hi > 0.0, "ln of non-positive value: {:?}", self);
        // Reduce to m in [0.5, 1) times 2^e so the Newton iteration never
        // over/underflows, then iterate y <- y + x*exp(-y) - 1 twice.
        let (_, e) = frexp(self.hi);
        let m = self.ldexp(-e);
        let mut y = Dd::from_f64(m.hi.ln());
        for _ in 0..2 {
            let r = m * (-y).exp();
            y = y + (r - Dd::ONE);
        }
        y + Dd::LN2 * Dd::from_f64(e as f64)
    }

    /// ln(1+x) for small |x|, avoiding cancellation.
    pub fn ln_1p(self) -> Dd {
        let u = Dd::ONE + self;
        if u.hi <= 0.0 {
            return Dd::from_f64(f64::NEG_INFINITY);
        }
        if u == Dd::ONE {
            return self;
        }
        u.ln()
    }

    pub fn powi(self, n: i32) -> Dd {
        let mut r = Dd::ONE;
        let mut base = if n < 0 { Dd::ONE / self } else { self };
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                r = r * base;
            }
            base = base.sqr();
            k >>= 1;
        }
        r
    }

    pub fn sqrt(self) -> Dd {
        if self.is_zero() {
            return Dd::ZERO;
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = Dd::from_f64(self.hi * x);
        ax + (self - ax.sqr()) * Dd::from_f64(x * 0.5)
    }
}

// exp() helper: inverse factorials 1/3! .. 1/17!.
const INV_FACT: [Dd; 15] = [
    Dd { hi: 1.6666666666666666e-1, lo: 9.25185853854297e-18 },
    Dd { hi: 4.1666666666666664e-2, lo: 2.3129646346357427e-18 },
    Dd { hi: 8.333333333333333e-3, lo: 1.1564823173178714e-19 },
    Dd { hi: 1.388888888888889e-3, lo: -5.300543954373577e-20 },
    Dd { hi: 1.984126984126984e-4, lo: 1.7209558293420705e-22 },
    Dd { hi: 2.48015873015873e-5, lo: 2.1511947866775882e-23 },
    Dd { hi: 2.7557319223985893e-6, lo: -1.858393274046472e-22 },
    Dd { hi: 2.755731922398589e-7, lo: 2.3767714622250297e-23 },
    Dd { hi: 2.505210838544172e-8, lo: -1.448814070935912e-24 },
    Dd { hi: 2.08767569878681e-9, lo: -1.20734505911326e-25 },
    Dd { hi: 1.6059043836821613e-10, lo: 1.2585294588752098e-26 },
    Dd { hi: 1.1470745597729725e-11, lo: 2.0655512752830745e-28 },
    Dd { hi: 7.647163731819816e-13, lo: 7.03872877733453e-30 },
    Dd { hi: 4.779477332387385e-14, lo: 4.399205485834081e-31 },
    Dd { hi: 2.8114572543455206e-15, lo: 1.6508842730861433e-31 },
];

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let (s1, s2b) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2b + t2);
        Dd { hi, lo }
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, o: Dd) {
        *self = *self + o;
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl SubAssign for Dd {
    #[inline]
    fn sub_assign(&mut self, o: Dd) {
        *self = *self - o;
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let (p1, mut p2) = two_prod(self.hi, o.hi);
        p2 += self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e } + Dd::from_f64(q3)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, o: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&o.lo),
            ord => ord,
        }
    }
}

fn libm_ldexp(x: f64, e: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    // Scale in up-to-three exact steps to avoid intermediate overflow.
    let mut e = e;
    let mut x = x;
    while e > 1000 {
        x *= f64::powi(2.0, 1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= f64::powi(2.0, -1000);
        e += 1000;
    }
    x * f64::powi(2.0, e)
}

fn frexp(x: f64) -> (f64, i32) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let exp_field = ((bits >> 52) & 0x7ff) as i32;
    if exp_field == 0 {
        // Subnormal: scale up first.
        let scaled = x * f64::powi(2.0, 64);
        let (m, e) = frexp(scaled);
        return (m, e - 64);
    }
    let e = exp_field - 1022;
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (m, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_mul_roundtrip() {
        let a = Dd::from_f64(1.0) / Dd::from_f64(3.0);
        let b = a * Dd::from_f64(3.0);
        assert!((b - Dd::ONE).abs().to_f64() < 1e-31);
    }

    #[test]
    fn exp_ln_inverse() {
        for &x in &[1e-8, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 700.0, 1e-300] {
            let l = Dd::from_f64(x).ln();
            let back = l.exp();
            let rel = ((back - Dd::from_f64(x)) / Dd::from_f64(x)).abs().to_f64();
            assert!(rel < 1e-29, "x={x} rel={rel}");
        }
    }

    #[test]
    fn exp_matches_known() {
        // e to 32 digits: 2.7182818284590452353602874713527
        let e = Dd::ONE.exp();
        let expect = Dd::new(2.718281828459045, 1.4456468917292502e-16);
        assert!((e - expect).abs().to_f64() < 1e-30);
    }

    #[test]
    fn ln2_constant() {
        let l = Dd::from_f64(2.0).ln();
        assert!((l - Dd::LN2).abs().to_f64() < 1e-31);
    }

    #[test]
    fn exp_large_negative() {
        let v = Dd::from_f64(-700.0).exp();
        let expect = 9.859676543759770e-305;
        assert!(((v.to_f64() - expect) / expect).abs() < 1e-14);
        assert_eq!(Dd::from_f64(-800.0).exp().to_f64(), 0.0);
    }

    #[test]
    fn frexp_basic() {
        let (m, e) = frexp(12.0);
        assert_eq!(m, 0.75);
        assert_eq!(e, 4);
    }

    #[test]
    fn ldexp_roundtrip() {
        let x = Dd::from_f64(1.2345);
        assert_eq!(x.ldexp(30).ldexp(-30), x);
    }

    #[test]
    fn div_accuracy() {
        let a = Dd::from_f64(355.0) / Dd::from_f64(113.0);
        let b = a * Dd::from_f64(113.0);
        assert!((b - Dd::from_f64(355.0)).abs().to_f64() < 1e-28);
    }
}
