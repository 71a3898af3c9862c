//! Small helpers for exact big-integer index arithmetic.

use num_bigint::BigUint;
use num_traits::{One, Zero};

/// d^e as an exact big integer.
pub fn big_pow(d: u32, e: u32) -> BigUint {
    BigUint::from(d).pow(e)
}

/// Ceiling division of non-negative big integers.
pub fn ceil_div(a: &BigUint, b: &BigUint) -> BigUint {
    if a.is_zero() {
        return BigUint::zero();
    }
    (a + (b - BigUint::one())) / b
}
