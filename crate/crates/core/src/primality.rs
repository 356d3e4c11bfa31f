//! Mersenne primality: the classical Lucas-Lehmer test and three
//! coefficient-sum variants, a one-way compositeness criterion, and the
//! even-perfect-number association.
//!
//! With n = 2^(p-1) and M = 2n - 1, every variant decides whether
//! M divides Σ_{k even} φ_k(n); they differ only in how the terms are built.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{is_small_prime, MersenneModulus, ModOutcome};
use crate::coefficients::{phi_sum_mod, stream_half, Direction};
use crate::error::{Error, Result};
use crate::limits::Limits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Classic,
    V1,
    V2,
    V3,
    Criterion,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Classic,
        Variant::V1,
        Variant::V2,
        Variant::V3,
        Variant::Criterion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
            Variant::Criterion => "criterion",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Prime,
    Composite,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Prime => "prime",
            Verdict::Composite => "composite",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of one primality test run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub p: u32,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub verdict: Verdict,
    /// Final sum mod M; absent for the classical test and when a witness
    /// cut the computation short.
    #[serde(with = "crate::bigser::opt", default)]
    pub residue: Option<BigInt>,
    #[serde(with = "crate::bigser::opt", default)]
    pub factor_witness: Option<BigInt>,
    pub terms_evaluated: u64,
    pub elapsed_us: u64,
}

struct Partial {
    verdict: Verdict,
    residue: Option<BigUint>,
    witness: Option<BigUint>,
    terms: u64,
}

impl Partial {
    fn from_sum(outcome: ModOutcome<BigUint>, terms: u64, on_zero: Verdict) -> Self {
        match outcome {
            ModOutcome::Value(r) => Partial {
                verdict: if r.is_zero() { on_zero } else { Verdict::Composite },
                residue: Some(r),
                witness: None,
                terms,
            },
            ModOutcome::Witness(w) => Partial {
                verdict: Verdict::Composite,
                residue: None,
                witness: Some(w.divisor().clone()),
                terms,
            },
        }
    }

    fn finish(self, p: u32, variant: Variant, direction: Option<Direction>, started: Instant) -> TestVerdict {
        TestVerdict {
            p,
            variant,
            direction,
            verdict: self.verdict,
            residue: self.residue.map(BigInt::from),
            factor_witness: self.witness.map(BigInt::from),
            terms_evaluated: self.terms,
            elapsed_us: started.elapsed().as_micros().min(u64::MAX as u128) as u64,
        }
    }
}

fn prime_exponent(p: u32, min: u32) -> Result<MersenneModulus> {
    if p < min {
        return Err(Error::ExponentTooSmall { p, min });
    }
    MersenneModulus::new(p)
}

fn check_stream_cap(p: u32, limits: &Limits) -> Result<()> {
    if p > limits.max_stream_p {
        return Err(Error::CapExceeded {
            what: "exponent p for streamed sums",
            value: p as u64,
            cap: limits.max_stream_p as u64,
        });
    }
    Ok(())
}

/// (1 + √3)^n + (1 - √3)^n ≡ 0 (mod M), by p - 1 squarings in Z[√3]/M.
pub fn lucas_lehmer_ring(p: u32) -> Result<bool> {
    let m = MersenneModulus::new(p)?;
    let three = BigUint::from(3u32);
    let (mut a, mut b) = (BigUint::one(), BigUint::one());
    for _ in 0..p - 1 {
        // (a + b√3)² = (a² + 3b²) + 2ab√3
        let a2 = m.add(&m.mul(&a, &a), &m.mul(&three, &m.mul(&b, &b)));
        let b2 = m.mul(&BigUint::from(2u32), &m.mul(&a, &b));
        (a, b) = (a2, b2);
    }
    // the √3 parts cancel; the sum is 2a
    Ok(m.add(&a, &a).is_zero())
}

/// s_0 = 4, s_{j+1} = s_j² - 2; M is prime iff s_{p-2} ≡ 0 (mod M).
pub fn lucas_lehmer_iterate(p: u32) -> Result<bool> {
    let m = MersenneModulus::new(p)?;
    let two = BigUint::from(2u32);
    let mut s = m.reduce(BigUint::from(4u32));
    for _ in 0..p.saturating_sub(2) {
        s = m.sub(&m.mul(&s, &s), &two);
    }
    Ok(s.is_zero())
}

/// Classical Lucas-Lehmer, run in both forms, which must agree.
/// p = 2 and p = 3 come from a table.
pub fn lucas_lehmer_classic(p: u32) -> Result<TestVerdict> {
    let started = Instant::now();
    MersenneModulus::new(p)?;
    let prime = if p <= 3 {
        true
    } else {
        let ring = lucas_lehmer_ring(p)?;
        let iterate = lucas_lehmer_iterate(p)?;
        if ring != iterate {
            return Err(Error::Consistency(format!(
                "Lucas-Lehmer forms disagree at p = {p}: ring {ring}, iterate {iterate}"
            )));
        }
        ring
    };
    Ok(Partial {
        verdict: if prime { Verdict::Prime } else { Verdict::Composite },
        residue: None,
        witness: None,
        terms: p.saturating_sub(2) as u64,
    }
    .finish(p, Variant::Classic, None, started))
}

/// Builds φ rows m = 0, 2, …, n with φ_k(m) = 4φ_{k-1}(m-2) - φ_k(m-4),
/// keeping only two rolling rows mod M, then sums the even-k entries of row n.
pub fn test_v1_recurrence(p: u32, limits: &Limits) -> Result<TestVerdict> {
    let started = Instant::now();
    let modulus = prime_exponent(p, 5)?;
    let n = stream_half(&modulus)?;
    if n > limits.max_table {
        return Err(Error::CapExceeded {
            what: "row index n = 2^(p-1) for v1 (use v2 or v3)",
            value: n,
            cap: limits.max_table,
        });
    }
    let m = modulus.modulus().to_u128().expect("p ≤ 62");
    let red = |v: i64| v.rem_euclid(m as i64) as u128;
    let row = |v: &[i64]| v.iter().map(|&x| red(x)).collect::<Vec<u128>>();
    // φ rows 4 and 6; row 8 onward only looks back four rows
    let (mut four_back, mut two_back) = (row(&[-2, 0, 16]), row(&[0, -12, 0, 64]));
    let mut terms = 0u64;
    let mut row_m = 8u64;
    while row_m <= n {
        let len = (row_m / 2 + 1) as usize;
        let mut next = Vec::with_capacity(len);
        for k in 0..len {
            let left = if k >= 1 { two_back[k - 1] * 4 % m } else { 0 };
            let right = four_back.get(k).copied().unwrap_or(0);
            next.push((left + m - right) % m);
        }
        terms += len as u64;
        four_back = std::mem::replace(&mut two_back, next);
        row_m += 2;
    }
    let sum = two_back.iter().step_by(2).fold(0u128, |acc, &v| (acc + v) % m);
    Ok(Partial::from_sum(ModOutcome::Value(BigUint::from(sum)), terms, Verdict::Prime)
        .finish(p, Variant::V1, None, started))
}

/// Σ_{k even ≤ n/2} N_k / k! mod M where N_k = N_{k-2}·factor(k), N_0 = `first`.
///
/// The fraction is carried as A/k! and inverted once at the end; a failed
/// inversion is turned into a factor witness from 2..=n/2.
fn deferred_factorial_sum(
    modulus: &MersenneModulus,
    first: BigUint,
    mut factor: impl FnMut(u64) -> BigUint,
) -> Result<(ModOutcome<BigUint>, u64)> {
    let n = stream_half(modulus)?;
    let top = n / 2;
    let mut numer = first;
    let mut acc = numer.clone();
    let mut fact = BigUint::one();
    let mut terms = 1u64;
    let mut k = 2u64;
    while k <= top {
        let kk = modulus.from_u128(k as u128 * (k as u128 - 1));
        numer = modulus.mul(&numer, &factor(k));
        acc = modulus.add(&modulus.mul(&acc, &kk), &numer);
        fact = modulus.mul(&fact, &kk);
        terms += 1;
        k += 2;
    }
    match modulus.inverse(&fact) {
        Ok(inv) => Ok((ModOutcome::Value(modulus.mul(&acc, &inv)), terms)),
        Err(_) => match modulus.witness_in_range(2, top) {
            Some(w) => Ok((ModOutcome::Witness(w), terms)),
            None => Err(Error::Consistency(format!(
                "(n/2)! is not invertible mod 2^{} - 1 but no factor ≤ n/2 exists",
                modulus.exponent()
            ))),
        },
    }
}

/// Σ (-1)^(k/2)·2·∏_{λ<k/2}(n² - (4λ)²) / k! over even k, from the closed form.
pub fn test_v2_closed_form(p: u32, limits: &Limits) -> Result<TestVerdict> {
    let started = Instant::now();
    let modulus = prime_exponent(p, 5)?;
    check_stream_cap(p, limits)?;
    let n = stream_half(&modulus)? as u128;
    let n_sq = modulus.from_u128(n * n);
    let (outcome, terms) = deferred_factorial_sum(&modulus, BigUint::from(2u32), |k| {
        // (-1)·(n² - (4(k/2 - 1))²)
        let t = 2 * k as u128 - 4;
        modulus.neg(&modulus.sub(&n_sq, &modulus.from_u128(t * t)))
    })?;
    Ok(Partial::from_sum(outcome, terms, Verdict::Prime).finish(p, Variant::V2, None, started))
}

/// Sums the ratio-generated φ stream in the given direction.
pub fn test_v3_ratio(p: u32, direction: Direction, parallelism: usize, limits: &Limits) -> Result<TestVerdict> {
    let started = Instant::now();
    let modulus = prime_exponent(p, 5)?;
    check_stream_cap(p, limits)?;
    let (outcome, terms) = phi_sum_mod(&modulus, direction, parallelism)?;
    Ok(Partial::from_sum(outcome.map(|s| s.residue), terms, Verdict::Prime)
        .finish(p, Variant::V3, Some(direction), started))
}

/// Σ ∏_{λ<k/2}((4λ)² - 4⁻¹) / k! over even k; a nonzero residue certifies
/// that M is composite, a zero residue decides nothing.
pub fn compositeness_criterion(p: u32, limits: &Limits) -> Result<TestVerdict> {
    let started = Instant::now();
    let modulus = prime_exponent(p, 5)?;
    check_stream_cap(p, limits)?;
    let inv4 = modulus
        .inverse_small(4)
        .map_err(|_| Error::Consistency("4 is not invertible mod an odd modulus".into()))?;
    let (outcome, terms) = deferred_factorial_sum(&modulus, BigUint::one(), |k| {
        let t = 2 * k as u128 - 4;
        modulus.sub(&modulus.from_u128(t * t), &inv4)
    })?;
    Ok(Partial::from_sum(outcome, terms, Verdict::Inconclusive)
        .finish(p, Variant::Criterion, None, started))
}

/// Runs one variant. `direction` only affects v3 (default forward).
pub fn run_test(
    p: u32,
    variant: Variant,
    direction: Option<Direction>,
    parallelism: usize,
    limits: &Limits,
) -> Result<TestVerdict> {
    match variant {
        Variant::Classic => lucas_lehmer_classic(p),
        Variant::V1 => test_v1_recurrence(p, limits),
        Variant::V2 => test_v2_closed_form(p, limits),
        Variant::V3 => test_v3_ratio(p, direction.unwrap_or(Direction::Forward), parallelism, limits),
        Variant::Criterion => compositeness_criterion(p, limits),
    }
}

/// Largest exponent for which the perfect-number check uses v2; the
/// variant is exponential in p, so larger exponents use the classical test.
pub const PERFECT_V2_MAX_P: u32 = 23;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerfectVerdict {
    #[serde(rename = "N", with = "crate::bigser::biguint")]
    pub n: BigUint,
    pub is_even_perfect: bool,
    #[serde(default)]
    pub p: Option<u32>,
}

/// N is even perfect iff N = 2^(p-1)(2^p - 1) with 2^p - 1 prime.
pub fn even_perfect_check(n: &BigUint, limits: &Limits) -> Result<PerfectVerdict> {
    let no = || PerfectVerdict { n: n.clone(), is_even_perfect: false, p: None };
    if n.is_zero() {
        return Ok(no());
    }
    let twos = n.trailing_zeros().unwrap_or(0);
    let odd = n >> twos;
    let p = match u32::try_from(twos + 1) {
        Ok(p) => p,
        Err(_) => return Ok(no()),
    };
    if odd != (BigUint::one() << p) - 1u32 || !is_small_prime(p as u64) {
        return Ok(no());
    }
    let verdict = if (5..=PERFECT_V2_MAX_P).contains(&p) {
        test_v2_closed_form(p, limits)?
    } else {
        lucas_lehmer_classic(p)?
    };
    Ok(if verdict.verdict == Verdict::Prime {
        PerfectVerdict { n: n.clone(), is_even_perfect: true, p: Some(p) }
    } else {
        no()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim() -> Limits {
        Limits::default()
    }

    #[test]
    fn classic_examples() {
        assert_eq!(lucas_lehmer_classic(5).unwrap().verdict, Verdict::Prime);
        assert_eq!(lucas_lehmer_classic(7).unwrap().verdict, Verdict::Prime);
        assert_eq!(lucas_lehmer_classic(11).unwrap().verdict, Verdict::Composite);
        assert_eq!(lucas_lehmer_classic(2).unwrap().verdict, Verdict::Prime);
        assert_eq!(lucas_lehmer_classic(3).unwrap().verdict, Verdict::Prime);
        assert_eq!(lucas_lehmer_classic(4), Err(Error::NotPrime(4)));
        assert!(lucas_lehmer_classic(5).unwrap().residue.is_none());
    }

    #[test]
    fn classic_forms_agree() {
        let known = [2u32, 3, 5, 7, 13, 17, 19, 31];
        for p in (2..=31).filter(|&p| is_small_prime(p as u64)) {
            let ring = lucas_lehmer_ring(p).unwrap();
            assert_eq!(ring, lucas_lehmer_iterate(p).unwrap(), "p={p}");
            if p >= 3 {
                assert_eq!(ring, known.contains(&p), "p={p}");
            }
        }
        assert!(!lucas_lehmer_ring(2).unwrap());
    }

    #[test]
    fn v1_examples() {
        let v = test_v1_recurrence(5, &lim()).unwrap();
        assert_eq!((v.verdict, v.residue), (Verdict::Prime, Some(BigInt::zero())));
        assert_eq!(test_v1_recurrence(7, &lim()).unwrap().verdict, Verdict::Prime);
        let c = test_v1_recurrence(11, &lim()).unwrap();
        assert_eq!(c.verdict, Verdict::Composite);
        assert_ne!(c.residue, Some(BigInt::zero()));
        assert!(matches!(test_v1_recurrence(17, &lim()), Err(Error::CapExceeded { .. })));
        assert!(matches!(test_v1_recurrence(3, &lim()), Err(Error::ExponentTooSmall { .. })));
    }

    #[test]
    fn v2_examples() {
        assert_eq!(test_v2_closed_form(5, &lim()).unwrap().verdict, Verdict::Prime);
        assert_eq!(test_v2_closed_form(13, &lim()).unwrap().verdict, Verdict::Prime);
        let c = test_v2_closed_form(11, &lim()).unwrap();
        assert_eq!(c.verdict, Verdict::Composite);
        assert_eq!(c.factor_witness, Some(BigInt::from(23)));
    }

    #[test]
    fn v3_examples() {
        for dir in [Direction::Forward, Direction::Backward] {
            let v = test_v3_ratio(5, dir, 1, &lim()).unwrap();
            assert_eq!((v.verdict, v.residue), (Verdict::Prime, Some(BigInt::zero())));
            assert_eq!(v.direction, Some(dir));
            assert_eq!(v.terms_evaluated, 5);
        }
        assert_eq!(test_v3_ratio(17, Direction::Forward, 4, &lim()).unwrap().verdict, Verdict::Prime);
    }

    #[test]
    fn criterion_examples() {
        assert_eq!(compositeness_criterion(11, &lim()).unwrap().verdict, Verdict::Composite);
        assert_eq!(compositeness_criterion(5, &lim()).unwrap().verdict, Verdict::Inconclusive);
        assert_eq!(compositeness_criterion(7, &lim()).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn variants_agree_up_to_19() {
        for p in [5u32, 7, 11, 13, 17, 19] {
            let classic = lucas_lehmer_classic(p).unwrap().verdict;
            let v2 = test_v2_closed_form(p, &lim()).unwrap();
            let fwd = test_v3_ratio(p, Direction::Forward, 1, &lim()).unwrap();
            let bwd = test_v3_ratio(p, Direction::Backward, 1, &lim()).unwrap();
            assert_eq!(v2.verdict, classic, "p={p}");
            assert_eq!(fwd.verdict, classic, "p={p}");
            assert_eq!(bwd.verdict, classic, "p={p}");
            if v2.residue.is_some() {
                assert_eq!(v2.residue, fwd.residue, "p={p}");
                assert_eq!(v2.residue, bwd.residue, "p={p}");
            }
            if p <= 13 {
                assert_eq!(test_v1_recurrence(p, &lim()).unwrap().verdict, classic, "p={p}");
            }
            let crit = compositeness_criterion(p, &lim()).unwrap().verdict;
            if classic == Verdict::Prime {
                assert_eq!(crit, Verdict::Inconclusive, "p={p}");
            } else {
                assert_eq!(crit, Verdict::Composite, "p={p}");
            }
        }
    }

    #[test]
    fn v1_residue_matches_v2_when_no_witness() {
        for p in [5u32, 7, 13] {
            let v1 = test_v1_recurrence(p, &lim()).unwrap().residue;
            assert_eq!(v1, test_v2_closed_form(p, &lim()).unwrap().residue);
        }
    }

    #[test]
    fn perfect_examples() {
        let check = |n: u64| even_perfect_check(&BigUint::from(n), &lim()).unwrap();
        assert_eq!(check(6).p, Some(2));
        assert!(check(6).is_even_perfect);
        assert_eq!(check(496).p, Some(5));
        assert!(!check(12).is_even_perfect);
        assert!(!check(0).is_even_perfect);
        assert!(!check(1).is_even_perfect);
        // 2^10·2047 has the right shape but 2047 = 23·89
        assert!(!check(1024 * 2047).is_even_perfect);
    }

    #[test]
    fn verdict_json_round_trip() {
        let v = test_v3_ratio(11, Direction::Backward, 1, &lim()).unwrap();
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<TestVerdict>(&text).unwrap(), v);
        let pv = even_perfect_check(&BigUint::from(496u32), &lim()).unwrap();
        let text = serde_json::to_string(&pv).unwrap();
        assert!(text.contains("\"N\":\"496\""));
        assert_eq!(serde_json::from_str::<PerfectVerdict>(&text).unwrap(), pv);
    }
}
