//! Exact integers, the residue-class discriminator, and arithmetic in Z/MZ
//! for M = 2^p - 1.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arbitrary-precision signed integer used for every exact coefficient and sum.
pub type ArbInt = BigInt;

/// Parity indicator `n mod 2`.
#[inline]
pub fn delta(n: i64) -> u32 {
    n.rem_euclid(2) as u32
}

/// `n mod 8`, the case discriminator for the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResidueClass8(u8);

impl ResidueClass8 {
    pub fn of(n: u64) -> Self {
        ResidueClass8((n % 8) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn parity(self) -> u8 {
        self.0 % 2
    }

    pub fn is_even(self) -> bool {
        self.0 % 2 == 0
    }
}

impl fmt::Display for ResidueClass8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod 8)", self.0)
    }
}

/// Deterministic trial-division primality check for exponents and other
/// machine-sized values.
pub fn is_small_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n < 4 {
        return true;
    }
    if n % 2 == 0 || n % 3 == 0 {
        return false;
    }
    let mut d = 5u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// A nontrivial divisor of a Mersenne modulus, found as the by-product of a
/// failed modular inversion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactorWitness {
    divisor: BigUint,
}

impl FactorWitness {
    /// Checks `1 < divisor < M` and `divisor | M`.
    pub fn new(divisor: BigUint, modulus: &MersenneModulus) -> Option<Self> {
        let m = modulus.modulus();
        if divisor > BigUint::one() && &divisor < m && (m % &divisor).is_zero() {
            Some(FactorWitness { divisor })
        } else {
            None
        }
    }

    pub fn divisor(&self) -> &BigUint {
        &self.divisor
    }
}

impl fmt::Display for FactorWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.divisor)
    }
}

/// Either a value in Z/MZ or a certificate that M is composite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModOutcome<T> {
    Value(T),
    Witness(FactorWitness),
}

impl<T> ModOutcome<T> {
    pub fn value(self) -> Option<T> {
        match self {
            ModOutcome::Value(v) => Some(v),
            ModOutcome::Witness(_) => None,
        }
    }

    pub fn witness(&self) -> Option<&FactorWitness> {
        match self {
            ModOutcome::Value(_) => None,
            ModOutcome::Witness(w) => Some(w),
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> ModOutcome<U> {
        match self {
            ModOutcome::Value(v) => ModOutcome::Value(f(v)),
            ModOutcome::Witness(w) => ModOutcome::Witness(w),
        }
    }
}

/// The ring Z/MZ with M = 2^p - 1 and p prime.
///
/// Products are reduced with the Mersenne fold: since 2^p = 1 (mod M), the
/// bits above position p can be shifted down and added back in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MersenneModulus {
    p: u32,
    m: BigUint,
    half: BigUint,
}

impl MersenneModulus {
    pub fn new(p: u32) -> Result<Self> {
        if p < 2 {
            return Err(Error::ExponentTooSmall { p, min: 2 });
        }
        if !is_small_prime(p as u64) {
            return Err(Error::NotPrime(p as u64));
        }
        let half = BigUint::one() << (p - 1);
        let m = (BigUint::one() << p) - 1u32;
        Ok(MersenneModulus { p, m, half })
    }

    pub fn exponent(&self) -> u32 {
        self.p
    }

    /// M = 2^p - 1.
    pub fn modulus(&self) -> &BigUint {
        &self.m
    }

    /// n = 2^(p-1), so that M = 2n - 1.
    pub fn half(&self) -> &BigUint {
        &self.half
    }

    /// n as a machine integer, when it fits.
    pub fn half_u64(&self) -> Option<u64> {
        self.half.to_u64()
    }

    /// Reduces any non-negative integer by repeated folding.
    pub fn reduce(&self, mut x: BigUint) -> BigUint {
        while x.bits() > self.p as u64 {
            let high = &x >> self.p;
            x &= &self.m;
            x += high;
        }
        if x == self.m {
            x.set_zero();
        }
        x
    }

    /// Plain division-based reduction, kept as an independent check on the fold.
    pub fn reduce_generic(&self, x: &BigUint) -> BigUint {
        x % &self.m
    }

    pub fn reduce_signed(&self, x: &BigInt) -> BigUint {
        let (sign, mag) = x.clone().into_parts();
        let r = self.reduce(mag);
        if sign == Sign::Minus {
            self.neg(&r)
        } else {
            r
        }
    }

    pub fn from_u128(&self, v: u128) -> BigUint {
        self.reduce(BigUint::from(v))
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        self.reduce(a * b)
    }

    pub fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        let s = a + b;
        if s >= self.m {
            s - &self.m
        } else {
            s
        }
    }

    pub fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        if a >= b {
            a - b
        } else {
            &self.m - (b - a)
        }
    }

    pub fn neg(&self, a: &BigUint) -> BigUint {
        if a.is_zero() {
            BigUint::zero()
        } else {
            &self.m - a
        }
    }

    pub fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        let mut result = BigUint::one();
        let base = self.reduce(base.clone());
        for i in (0..exp.bits()).rev() {
            result = self.mul(&result, &result);
            if exp.bit(i) {
                result = self.mul(&result, &base);
            }
        }
        self.reduce(result)
    }

    /// Modular inverse; on failure returns `gcd(a, M)`.
    pub fn inverse(&self, a: &BigUint) -> std::result::Result<BigUint, BigUint> {
        let a = BigInt::from(self.reduce(a.clone()));
        let m = BigInt::from(self.m.clone());
        let eg = a.extended_gcd(&m);
        if !eg.gcd.is_one() {
            return Err(eg.gcd.magnitude().clone());
        }
        Ok(eg.x.mod_floor(&m).magnitude().clone())
    }

    /// Inverse of a machine-sized value. One big division brings the
    /// extended Euclid loop down to 128-bit words.
    pub fn inverse_small(&self, a: u128) -> std::result::Result<BigUint, BigUint> {
        assert!(a < 1 << 126, "inverse_small argument too large");
        if a == 0 {
            return Err(self.m.clone());
        }
        let (q, r) = self.m.div_rem(&BigUint::from(a));
        let r = r.to_u128().expect("remainder below divisor");
        let (g, s, t) = ext_gcd_i128(a as i128, r as i128);
        if g != 1 {
            return Err(BigUint::from(g as u128));
        }
        // a*s + (M - q*a)*t = 1  =>  a*(s - q*t) = 1 (mod M)
        let inv = BigInt::from(s) - BigInt::from(q) * BigInt::from(t);
        Ok(self.reduce_signed(&inv))
    }

    /// Representative in (-M/2, M/2].
    pub fn signed(&self, r: &BigUint) -> BigInt {
        let r = self.reduce(r.clone());
        if r > (&self.m >> 1u32) {
            BigInt::from(r) - BigInt::from(self.m.clone())
        } else {
            BigInt::from(r)
        }
    }

    /// First candidate sharing a proper factor with M.
    pub fn witness_among<I: IntoIterator<Item = u128>>(&self, candidates: I) -> Option<FactorWitness> {
        for c in candidates {
            if c < 2 {
                continue;
            }
            let r = (&self.m % BigUint::from(c)).to_u128().unwrap_or(0);
            let g = gcd_u128(c, r);
            if g > 1 {
                if let Some(w) = FactorWitness::new(BigUint::from(g), self) {
                    return Some(w);
                }
            }
        }
        None
    }

    /// Scans `lo..=hi` for a value sharing a factor with M.
    pub fn witness_in_range(&self, lo: u64, hi: u64) -> Option<FactorWitness> {
        self.witness_among((lo..=hi).map(u128::from))
    }
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Returns `(g, s, t)` with `a*s + b*t = g`.
fn ext_gcd_i128(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    (old_r, old_s, old_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn modulus_shape() {
        let m = MersenneModulus::new(5).unwrap();
        assert_eq!(m.modulus(), &BigUint::from(31u32));
        assert_eq!(m.half(), &BigUint::from(16u32));
        for p in [5u32, 7, 13, 17, 19, 31] {
            let m = MersenneModulus::new(p).unwrap();
            assert_eq!(m.modulus(), &(m.half() * 2u32 - 1u32));
            assert!((m.half() % 8u32).is_zero());
        }
    }

    #[test]
    fn rejects_bad_exponents() {
        assert_eq!(MersenneModulus::new(1), Err(Error::ExponentTooSmall { p: 1, min: 2 }));
        assert_eq!(MersenneModulus::new(9), Err(Error::NotPrime(9)));
    }

    #[test]
    fn signed_representatives() {
        let m = MersenneModulus::new(5).unwrap();
        assert_eq!(m.signed(&BigUint::from(23u32)), BigInt::from(-8));
        assert_eq!(m.signed(&BigUint::from(15u32)), BigInt::from(15));
        assert_eq!(m.signed(&BigUint::from(16u32)), BigInt::from(-15));
        assert_eq!(m.signed(&BigUint::from(30u32)), BigInt::from(-1));
    }

    #[test]
    fn failed_inverse_reports_gcd() {
        let m = MersenneModulus::new(11).unwrap();
        assert_eq!(m.inverse_small(46), Err(BigUint::from(23u32)));
        assert_eq!(m.inverse(&BigUint::from(89u32 * 3)), Err(BigUint::from(89u32)));
        let w = m.witness_in_range(2, 30).unwrap();
        assert_eq!(w.divisor(), &BigUint::from(23u32));
    }

    #[test]
    fn witness_rejects_modulus_itself() {
        let m = MersenneModulus::new(11).unwrap();
        assert!(FactorWitness::new(BigUint::from(2047u32), &m).is_none());
        assert!(FactorWitness::new(BigUint::from(89u32), &m).is_some());
    }

    #[test]
    fn residue_class() {
        assert_eq!(ResidueClass8::of(19).value(), 3);
        assert_eq!(ResidueClass8::of(19).parity(), 1);
        assert_eq!(delta(-1), 1);
        assert_eq!(delta(4), 0);
    }

    proptest! {
        #[test]
        fn fold_matches_division(p in prop::sample::select(vec![5u32, 7, 13, 31, 61, 89, 127]),
                                 limbs in prop::collection::vec(any::<u32>(), 0..12)) {
            let m = MersenneModulus::new(p).unwrap();
            let x = BigUint::new(limbs);
            prop_assert_eq!(m.reduce(x.clone()), m.reduce_generic(&x));
        }

        #[test]
        fn small_inverse_is_inverse(p in prop::sample::select(vec![5u32, 7, 13, 31, 61, 127]),
                                    a in 1u64..u64::MAX) {
            let m = MersenneModulus::new(p).unwrap();
            match m.inverse_small(a as u128) {
                Ok(inv) => prop_assert!(m.mul(&inv, &m.from_u128(a as u128)).is_one()),
                Err(g) => prop_assert!(g > BigUint::one()),
            }
        }
    }
}
