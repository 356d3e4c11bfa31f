//! Brute-force expansion of x^n + y^n in the symmetric coordinates
//! q = xy and s = x² + y², independent of every closed form.
//!
//! Even n use the power-sum recurrence P_n = s·P_{n-2} - q²·P_{n-4} (x² and
//! y² are the roots of t² - s·t + q²). For odd n the same recurrence runs on
//! D_n = (x^n + y^n)/(x + y), seeded by hand: D_1 = 1, D_3 = s - q.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Pow, Zero};

use crate::arith::{delta, ArbInt};
use crate::error::{Error, Result};
use crate::limits::Limits;

/// Sparse polynomial in q and s keyed by (deg_q, deg_s); never stores zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymmetricPoly {
    coeffs: BTreeMap<(u32, u32), ArbInt>,
}

impl SymmetricPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(deg_q: u32, deg_s: u32, c: impl Into<BigInt>) -> Self {
        let mut p = Self::zero();
        p.add_term(deg_q, deg_s, c.into());
        p
    }

    fn add_term(&mut self, deg_q: u32, deg_s: u32, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let slot = self.coeffs.entry((deg_q, deg_s)).or_default();
        *slot += c;
        if slot.is_zero() {
            self.coeffs.remove(&(deg_q, deg_s));
        }
    }

    /// Coefficient of q^deg_q s^deg_s (zero when absent).
    pub fn coeff(&self, deg_q: u32, deg_s: u32) -> ArbInt {
        self.coeffs.get(&(deg_q, deg_s)).cloned().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &ArbInt)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// self·c·q^dq·s^ds
    fn shifted(&self, dq: u32, ds: u32, c: i64) -> Self {
        let mut out = Self::zero();
        for (&(a, b), v) in &self.coeffs {
            out.add_term(a + dq, b + ds, v * c);
        }
        out
    }

    fn add(mut self, other: &Self) -> Self {
        for (&(a, b), v) in &other.coeffs {
            self.add_term(a, b, v.clone());
        }
        self
    }

    /// Exact value at the point (q, s).
    pub fn evaluate(&self, q: &BigInt, s: &BigInt) -> BigInt {
        self.coeffs
            .iter()
            .map(|(&(a, b), c)| c * Pow::pow(q, a) * Pow::pow(s, b))
            .sum()
    }
}

/// (x^n + y^n)/(x + y)^δ(n) as a polynomial in q and s.
pub fn power_sum_poly(n: u64, limits: &Limits) -> Result<SymmetricPoly> {
    if n > limits.max_oracle_n {
        return Err(Error::CapExceeded {
            what: "oracle degree n",
            value: n,
            cap: limits.max_oracle_n,
        });
    }
    let (mut older, mut old) = if n % 2 == 0 {
        (SymmetricPoly::monomial(0, 0, 2), SymmetricPoly::monomial(0, 1, 1))
    } else {
        (
            SymmetricPoly::monomial(0, 0, 1),
            SymmetricPoly::monomial(0, 1, 1).add(&SymmetricPoly::monomial(1, 0, -1)),
        )
    };
    let mut m = if n % 2 == 0 { 0 } else { 1 };
    if n == m {
        return Ok(older);
    }
    m += 2;
    while m < n {
        let next = old.shifted(0, 1, 1).add(&older.shifted(2, 0, -1));
        older = std::mem::replace(&mut old, next);
        m += 2;
    }
    Ok(old)
}

/// [Ψ_0(n), …, Ψ_⌊n/2⌋(n)] read off the brute-force expansion.
pub fn oracle_psi(n: u64, limits: &Limits) -> Result<Vec<ArbInt>> {
    let poly = power_sum_poly(n, limits)?;
    let h = (n / 2) as u32;
    Ok((0..=h).map(|k| poly.coeff(h - k, k)).collect())
}

/// Checks the expansion at an integer point (x, y).
pub fn numeric_spot_check(n: u64, x: &BigInt, y: &BigInt, limits: &Limits) -> Result<bool> {
    let sum_xy = x + y;
    if n % 2 == 1 && sum_xy.is_zero() {
        return Err(Error::InvalidArgument(format!(
            "x + y = 0 with odd n = {n}: the division by x + y is undefined"
        )));
    }
    let e = n as u32;
    let top = Pow::pow(x, e) + Pow::pow(y, e);
    let lhs = if delta(n as i64) == 1 {
        let (quot, rem) = top.div_rem(&sum_xy);
        if !rem.is_zero() {
            return Err(Error::InexactDivision(format!("(x^{n} + y^{n}) by x + y")));
        }
        quot
    } else {
        top
    };
    let poly = power_sum_poly(n, limits)?;
    Ok(poly.evaluate(&(x * y), &(x * x + y * y)) == lhs)
}

/// (1 + √3)^n + (1 - √3)^n computed in Z[√3]; the expansion at
/// q = -2, s = 8 must reproduce it for even n.
pub fn sqrt3_power_sum(n: u64) -> BigInt {
    // (a + b√3)(c + d√3) = (ac + 3bd) + (ad + bc)√3
    let mul = |(a, b): (BigInt, BigInt), (c, d): (&BigInt, &BigInt)| {
        (&a * c + BigInt::from(3) * &b * d, a * d + b * c)
    };
    let mut acc = (BigInt::one(), BigInt::zero());
    let mut base = (BigInt::one(), BigInt::one());
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, (&base.0, &base.1));
        }
        let b = base.clone();
        base = mul(b, (&base.0, &base.1));
        e >>= 1;
    }
    acc.0 * 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::psi_row;
    use proptest::prelude::*;

    fn lim() -> Limits {
        Limits::default()
    }

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn small_polynomials() {
        let p2 = power_sum_poly(2, &lim()).unwrap();
        assert_eq!(p2, SymmetricPoly::monomial(0, 1, 1));
        let p4 = power_sum_poly(4, &lim()).unwrap();
        assert_eq!(p4.len(), 2);
        assert_eq!(p4.coeff(2, 0), BigInt::from(-2));
        assert_eq!(p4.coeff(0, 2), BigInt::from(1));
        assert_eq!(power_sum_poly(1, &lim()).unwrap(), SymmetricPoly::monomial(0, 0, 1));
        let p6 = power_sum_poly(6, &lim()).unwrap();
        assert_eq!(p6.coeff(2, 1), BigInt::from(-3));
        assert_eq!(p6.coeff(0, 3), BigInt::from(1));
    }

    #[test]
    fn oracle_rows() {
        assert_eq!(oracle_psi(16, &lim()).unwrap(), ints(&[2, 0, -16, 0, 20, 0, -8, 0, 1]));
        assert_eq!(oracle_psi(0, &lim()).unwrap(), ints(&[2]));
        assert_eq!(oracle_psi(3, &lim()).unwrap(), ints(&[-1, 1]));
    }

    #[test]
    fn oracle_cap() {
        assert!(matches!(power_sum_poly(513, &lim()), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn weighted_degree_is_homogeneous() {
        for n in 0..=40u64 {
            let w = 2 * (n / 2) as u32;
            for (&(a, b), _) in power_sum_poly(n, &lim()).unwrap().terms() {
                assert_eq!(2 * a + 2 * b, w, "n={n}");
            }
        }
    }

    #[test]
    fn oracle_matches_closed_form() {
        for n in 0..=64 {
            assert_eq!(oracle_psi(n, &lim()).unwrap(), psi_row(n).unwrap(), "n={n}");
        }
    }

    #[test]
    fn spot_check_examples() {
        let b = BigInt::from;
        assert!(numeric_spot_check(5, &b(2), &b(1), &lim()).unwrap());
        assert!(numeric_spot_check(8, &b(1), &b(1), &lim()).unwrap());
        assert!(matches!(
            numeric_spot_check(3, &b(2), &b(-2), &lim()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(numeric_spot_check(4, &b(2), &b(-2), &lim()).unwrap());
    }

    #[test]
    fn sqrt3_point() {
        // (1+√3)^2 + (1-√3)^2 = 8
        assert_eq!(sqrt3_power_sum(2), BigInt::from(8));
        for n in [2u64, 8, 16, 32] {
            let poly = power_sum_poly(n, &lim()).unwrap();
            assert_eq!(poly.evaluate(&BigInt::from(-2), &BigInt::from(8)), sqrt3_power_sum(n));
        }
    }

    proptest! {
        #[test]
        fn random_points(n in 0u64..=40, x in -10i64..=10, y in -10i64..=10) {
            prop_assume!(n % 2 == 0 || x + y != 0);
            prop_assert!(numeric_spot_check(n, &BigInt::from(x), &BigInt::from(y), &lim()).unwrap());
        }
    }
}
