//! Partial-sum traces of the even-index φ series mod M, their
//! classification against the hypothetical ±2^j + ε template, exact sums
//! and their factorizations, and scans over exponent families.

use std::fmt;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::str::FromStr;
use std::time::Duration;

use log::info;
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{is_small_prime, MersenneModulus, ModOutcome};
use crate::coefficients::{phi_row_by_ratio, phi_stream_mod, stream_half, Direction};
use crate::error::{Error, Result};
use crate::factor::{factorize, is_probable_prime};
use crate::limits::Limits;

fn prime_exponent(p: u32) -> Result<MersenneModulus> {
    if p < 5 {
        return Err(Error::ExponentTooSmall { p, min: 5 });
    }
    MersenneModulus::new(p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    /// Signed representative of φ_k(n) mod M.
    #[serde(with = "crate::bigser")]
    pub term: BigInt,
    /// Signed representative of the partial sum up to and including `k`.
    #[serde(with = "crate::bigser")]
    pub running_sum: BigInt,
}

/// Partial sums in the order k = ⌊n/2⌋, 0, 2, …, ⌊n/2⌋ - 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialSumTrace {
    pub p: u32,
    pub records: Vec<TraceRecord>,
    /// Set when a failed inverse cut the trace short.
    #[serde(with = "crate::bigser::opt", default)]
    pub factor_witness: Option<BigInt>,
}

impl PartialSumTrace {
    pub fn final_sum(&self) -> Option<&BigInt> {
        self.records.last().map(|r| &r.running_sum)
    }

    pub fn is_complete(&self) -> bool {
        self.factor_witness.is_none()
    }

    /// CSV with header `k,term,running_sum`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,term,running_sum")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.k, r.term, r.running_sum)?;
        }
        Ok(())
    }
}

pub fn partial_sum_trace(p: u32, limits: &Limits) -> Result<PartialSumTrace> {
    let modulus = prime_exponent(p)?;
    if p > limits.max_trace_p {
        return Err(Error::CapExceeded {
            what: "exponent p for stored traces",
            value: p as u64,
            cap: limits.max_trace_p as u64,
        });
    }
    let top = stream_half(&modulus)? / 2;
    let last = phi_stream_mod(&modulus, Direction::Backward)?
        .next()
        .and_then(ModOutcome::value)
        .expect("the first backward term needs no inverse");
    let mut records = Vec::with_capacity(top as usize / 2 + 1);
    let mut acc = BigUint::zero();
    let mut push = |k: u64, residue: &BigUint, records: &mut Vec<TraceRecord>| {
        acc = modulus.add(&acc, residue);
        records.push(TraceRecord {
            k,
            term: modulus.signed(residue),
            running_sum: modulus.signed(&acc),
        });
    };
    push(last.k, &last.residue, &mut records);
    let mut factor_witness = None;
    for item in phi_stream_mod(&modulus, Direction::Forward)? {
        match item {
            ModOutcome::Value(t) if t.k < top => push(t.k, &t.residue, &mut records),
            ModOutcome::Value(_) => break,
            ModOutcome::Witness(w) => {
                factor_witness = Some(BigInt::from(w.divisor().clone()));
                break;
            }
        }
    }
    Ok(PartialSumTrace { p, records, factor_witness })
}

/// Number of template lines written out explicitly; later positions are
/// not classified.
pub const TEMPLATE_POSITIONS: usize = 7;

/// The template value at a 1-based position: +2, +2², -2², +2³, -2³, +2⁴, -2⁴.
pub fn template_value(position: usize) -> Option<BigInt> {
    if position == 0 || position > TEMPLATE_POSITIONS {
        return None;
    }
    let j = position - 1;
    Some(match j {
        0 => BigInt::from(2),
        1 => BigInt::from(4),
        _ => {
            let mag = BigInt::from(1) << ((j + 1) / 2 + 1);
            if j % 2 == 0 {
                -mag
            } else {
                mag
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternReport {
    pub p: u32,
    pub matches_hypothesis: bool,
    /// ε at each classified position; `None` where the offset is outside {-1, 0, 1}
    /// (positions 1 and 2 admit only 0).
    pub epsilons: Vec<Option<i8>>,
    /// Raw signed offsets (partial sum minus template value) mod M.
    #[serde(with = "crate::bigser::vec")]
    pub offsets: Vec<BigInt>,
    /// The classified partial sums themselves.
    #[serde(with = "crate::bigser::vec")]
    pub raw_sums: Vec<BigInt>,
    /// 1-based position of the first mismatch.
    pub first_mismatch: Option<usize>,
    /// Trace positions past the explicit template, left unclassified.
    pub beyond_template: usize,
}

pub fn classify_epsilon_pattern(trace: &PartialSumTrace) -> Result<PatternReport> {
    let modulus = MersenneModulus::new(trace.p)?;
    let mut epsilons = Vec::new();
    let mut offsets = Vec::new();
    let mut raw_sums = Vec::new();
    let mut first_mismatch = None;
    for (i, rec) in trace.records.iter().take(TEMPLATE_POSITIONS).enumerate() {
        let position = i + 1;
        let want = template_value(position).expect("within template");
        let offset = modulus.signed(&modulus.reduce_signed(&(&rec.running_sum - want)));
        let eps = match offset.to_string().as_str() {
            "0" => Some(0),
            "1" if position > 2 => Some(1),
            "-1" if position > 2 => Some(-1),
            _ => None,
        };
        if eps.is_none() && first_mismatch.is_none() {
            first_mismatch = Some(position);
        }
        epsilons.push(eps);
        offsets.push(offset);
        raw_sums.push(rec.running_sum.clone());
    }
    Ok(PatternReport {
        p: trace.p,
        matches_hypothesis: first_mismatch.is_none(),
        epsilons,
        offsets,
        raw_sums,
        first_mismatch,
        beyond_template: trace.records.len().saturating_sub(TEMPLATE_POSITIONS),
    })
}

/// A trace together with its classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub trace: PartialSumTrace,
    pub pattern: PatternReport,
}

pub fn explore(p: u32, limits: &Limits) -> Result<ExploreReport> {
    let trace = partial_sum_trace(p, limits)?;
    let pattern = classify_epsilon_pattern(&trace)?;
    Ok(ExploreReport { trace, pattern })
}

/// Σ_{k even} φ_k(n) exactly, n = 2^(p-1).
pub fn full_sum_exact(p: u32, limits: &Limits) -> Result<BigInt> {
    let modulus = prime_exponent(p)?;
    if p > limits.max_exact_sum_p {
        return Err(Error::CapExceeded {
            what: "exponent p for exact sums",
            value: p as u64,
            cap: limits.max_exact_sum_p as u64,
        });
    }
    let row = phi_row_by_ratio(stream_half(&modulus)?)?;
    Ok(row.iter().step_by(2).sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimePower {
    #[serde(with = "crate::bigser")]
    pub prime: BigInt,
    pub multiplicity: u32,
}

/// Whether a prime factor of M divides the exact sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulusFactorCheck {
    #[serde(with = "crate::bigser")]
    pub factor: BigInt,
    pub divides_sum: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorReport {
    pub p: u32,
    #[serde(with = "crate::bigser")]
    pub sum: BigInt,
    pub factors: Vec<PrimePower>,
    /// Unsplit composite remainder of |sum| (1 when complete).
    #[serde(with = "crate::bigser")]
    pub cofactor: BigInt,
    pub complete: bool,
    pub budget_spent_ms: u64,
    pub modulus_divides_sum: bool,
    pub modulus_factors: Vec<ModulusFactorCheck>,
}

pub fn factor_sum(p: u32, budget: Duration, seed: u64, limits: &Limits) -> Result<FactorReport> {
    let sum = full_sum_exact(p, limits)?;
    let modulus = MersenneModulus::new(p)?;
    let magnitude = sum.magnitude().clone();
    let fz = factorize(&magnitude, budget, seed);
    let m = modulus.modulus();
    let m_factors = factorize(m, budget, seed);
    let modulus_factors = m_factors
        .factors
        .keys()
        .map(|f| ModulusFactorCheck {
            factor: BigInt::from(f.clone()),
            divides_sum: (&magnitude % f).is_zero(),
        })
        .collect();
    Ok(FactorReport {
        p,
        modulus_divides_sum: (&magnitude % m).is_zero(),
        factors: fz
            .factors
            .iter()
            .map(|(prime, &multiplicity)| PrimePower { prime: BigInt::from(prime.clone()), multiplicity })
            .collect(),
        cofactor: BigInt::from(fz.cofactor),
        complete: fz.complete,
        budget_spent_ms: fz.elapsed.as_millis().min(u64::MAX as u128) as u64,
        modulus_factors,
        sum,
    })
}

impl FactorReport {
    /// Every listed factor passes the primality battery and the product
    /// with the cofactor reproduces |sum|.
    pub fn is_consistent(&self, seed: u64) -> bool {
        let product = self.factors.iter().fold(self.cofactor.clone(), |acc, f| {
            acc * num_traits::pow(f.prime.clone(), f.multiplicity as usize)
        });
        product == self.sum.abs()
            && self.factors.iter().all(|f| {
                f.prime.sign() == Sign::Plus && is_probable_prime(f.prime.magnitude(), seed)
            })
    }
}

/// Exponent families 2^a ± 1 and 2^a ± 2^b ± 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExponentFamily {
    #[serde(rename = "2^a+1")]
    PowPlusOne,
    #[serde(rename = "2^a-1")]
    PowMinusOne,
    #[serde(rename = "2^a+2^b+1")]
    PowPlusPowPlusOne,
    #[serde(rename = "2^a+2^b-1")]
    PowPlusPowMinusOne,
    #[serde(rename = "2^a-2^b+1")]
    PowMinusPowPlusOne,
    #[serde(rename = "2^a-2^b-1")]
    PowMinusPowMinusOne,
}

impl ExponentFamily {
    pub const ALL: [ExponentFamily; 6] = [
        ExponentFamily::PowPlusOne,
        ExponentFamily::PowMinusOne,
        ExponentFamily::PowPlusPowPlusOne,
        ExponentFamily::PowPlusPowMinusOne,
        ExponentFamily::PowMinusPowPlusOne,
        ExponentFamily::PowMinusPowMinusOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExponentFamily::PowPlusOne => "2^a+1",
            ExponentFamily::PowMinusOne => "2^a-1",
            ExponentFamily::PowPlusPowPlusOne => "2^a+2^b+1",
            ExponentFamily::PowPlusPowMinusOne => "2^a+2^b-1",
            ExponentFamily::PowMinusPowPlusOne => "2^a-2^b+1",
            ExponentFamily::PowMinusPowMinusOne => "2^a-2^b-1",
        }
    }

    pub fn uses_b(self) -> bool {
        !matches!(self, ExponentFamily::PowPlusOne | ExponentFamily::PowMinusOne)
    }

    /// The family member for (a, b), if positive and representable.
    pub fn value(self, a: u32, b: u32) -> Option<u64> {
        let pa = 1i128.checked_shl(a).filter(|_| a < 100)?;
        let pb = 1i128.checked_shl(b).filter(|_| b < 100)?;
        let v = match self {
            ExponentFamily::PowPlusOne => pa + 1,
            ExponentFamily::PowMinusOne => pa - 1,
            ExponentFamily::PowPlusPowPlusOne => pa + pb + 1,
            ExponentFamily::PowPlusPowMinusOne => pa + pb - 1,
            ExponentFamily::PowMinusPowPlusOne => pa - pb + 1,
            ExponentFamily::PowMinusPowMinusOne => pa - pb - 1,
        };
        u64::try_from(v).ok().filter(|&v| v > 0)
    }
}

impl fmt::Display for ExponentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExponentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        ExponentFamily::ALL
            .into_iter()
            .find(|f| f.name() == compact)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown exponent family {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedExponent {
    pub a: u32,
    #[serde(default)]
    pub b: Option<u32>,
    pub value: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub family: ExponentFamily,
    /// One report per distinct tested exponent, ordered by p.
    pub reports: Vec<PatternReport>,
    pub skipped: Vec<SkippedExponent>,
    pub tested: usize,
    pub matched: usize,
    pub match_rate: f64,
}

pub fn scan_exponent_family(
    family: ExponentFamily,
    a_range: RangeInclusive<u32>,
    b_range: Option<RangeInclusive<u32>>,
    limits: &Limits,
) -> Result<ScanReport> {
    if a_range.is_empty() {
        return Err(Error::EmptyRange(format!("a range {a_range:?}")));
    }
    let pairs: Vec<(u32, Option<u32>)> = if family.uses_b() {
        let b_range = b_range
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::EmptyRange(format!("family {family} needs a nonempty b range")))?;
        a_range
            .clone()
            .flat_map(|a| b_range.clone().map(move |b| (a, Some(b))))
            .collect()
    } else {
        a_range.clone().map(|a| (a, None)).collect()
    };

    let mut skipped = Vec::new();
    let mut exponents = std::collections::BTreeSet::new();
    for (a, b) in pairs {
        let value = family.value(a, b.unwrap_or(0));
        let reason = match value {
            None => Some("not a positive integer".to_string()),
            Some(v) if !is_small_prime(v) => Some("not prime".to_string()),
            Some(v) if v < 5 => Some("below the minimum exponent 5".to_string()),
            Some(v) if v > limits.max_trace_p as u64 => {
                Some(format!("above the trace cap {}", limits.max_trace_p))
            }
            Some(_) => None,
        };
        match reason {
            Some(reason) => {
                info!("scan {family}: skipping a = {a}, b = {b:?}, value {value:?}: {reason}");
                skipped.push(SkippedExponent { a, b, value, reason });
            }
            None => {
                exponents.insert(value.expect("checked") as u32);
            }
        }
    }

    let mut reports = exponents
        .into_par_iter()
        .map(|p| classify_epsilon_pattern(&partial_sum_trace(p, limits)?))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|r| r.p);
    let tested = reports.len();
    let matched = reports.iter().filter(|r| r.matches_hypothesis).count();
    Ok(ScanReport {
        family,
        reports,
        skipped,
        tested,
        matched,
        match_rate: if tested == 0 { 0.0 } else { matched as f64 / tested as f64 },
    })
}

/// Sum of divisors; brute force for modest N.
pub fn divisor_sum(n: u64) -> u64 {
    (1..=num_integer::Roots::sqrt(&n))
        .filter(|d| n % d == 0)
        .map(|d| if d * d == n { d } else { d + n / d })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lim() -> Limits {
        Limits::default()
    }

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn scenario_trace() {
        let t = partial_sum_trace(5, &lim()).unwrap();
        let sums: Vec<BigInt> = t.records.iter().map(|r| r.running_sum.clone()).collect();
        let terms: Vec<BigInt> = t.records.iter().map(|r| r.term.clone()).collect();
        let ks: Vec<u64> = t.records.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![8, 0, 2, 4, 6]);
        assert_eq!(sums, ints(&[2, 4, -4, 1, 0]));
        assert_eq!(terms, ints(&[2, 2, -8, 5, -1]));
        assert!(t.is_complete());
        let t7 = partial_sum_trace(7, &lim()).unwrap();
        assert_eq!(t7.final_sum(), Some(&BigInt::zero()));
    }

    #[test]
    fn trace_with_witness_is_truncated() {
        let t = partial_sum_trace(11, &lim()).unwrap();
        assert_eq!(t.factor_witness, Some(BigInt::from(23)));
        assert_eq!(t.records.first().unwrap().term, BigInt::from(2));
    }

    #[test]
    fn trace_csv() {
        let mut buf = Vec::new();
        partial_sum_trace(5, &lim()).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "k,term,running_sum\n8,2,2\n0,2,4\n2,-8,-4\n4,5,1\n6,-1,0\n");
    }

    #[test]
    fn template_schedule() {
        let v: Vec<BigInt> = (1..=7).map(|i| template_value(i).unwrap()).collect();
        assert_eq!(v, ints(&[2, 4, -4, 8, -8, 16, -16]));
        assert!(template_value(8).is_none());
    }

    #[test]
    fn classify_scenario() {
        let r = classify_epsilon_pattern(&partial_sum_trace(5, &lim()).unwrap()).unwrap();
        assert_eq!(r.epsilons[..3], [Some(0), Some(0), Some(0)]);
        // +1 against +2³ is an offset of -7: recorded, not absorbed into ε
        assert_eq!(r.offsets[3], BigInt::from(-7));
        assert_eq!(r.first_mismatch, Some(4));
        assert!(!r.matches_hypothesis);
        assert_eq!(r.raw_sums, ints(&[2, 4, -4, 1, 0]));
    }

    #[test]
    fn classify_all_zero() {
        let trace = PartialSumTrace {
            p: 7,
            records: (0..5)
                .map(|k| TraceRecord { k, term: BigInt::zero(), running_sum: BigInt::zero() })
                .collect(),
            factor_witness: None,
        };
        let r = classify_epsilon_pattern(&trace).unwrap();
        assert_eq!(r.first_mismatch, Some(1));
    }

    #[test]
    fn classify_beyond_template() {
        let r = classify_epsilon_pattern(&partial_sum_trace(7, &lim()).unwrap()).unwrap();
        assert_eq!(r.epsilons.len(), 7);
        assert_eq!(r.beyond_template, 17 - 7);
    }

    #[test]
    fn exact_sums() {
        assert_eq!(full_sum_exact(5, &lim()).unwrap(), BigInt::from(37634));
        let s7 = full_sum_exact(7, &lim()).unwrap();
        assert!((&s7 % BigInt::from(127)).is_zero());
        assert!(matches!(full_sum_exact(17, &lim()), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn factor_reports() {
        let r = factor_sum(5, Duration::from_secs(5), 0, &lim()).unwrap();
        let fs: Vec<(String, u32)> = r.factors.iter().map(|f| (f.prime.to_string(), f.multiplicity)).collect();
        assert_eq!(fs, vec![("2".into(), 1), ("31".into(), 1), ("607".into(), 1)]);
        assert!(r.complete && r.modulus_divides_sum && r.is_consistent(0));

        let r7 = factor_sum(7, Duration::from_secs(10), 0, &lim()).unwrap();
        assert!(r7.factors.iter().any(|f| f.prime == BigInt::from(127)));
        assert!(r7.is_consistent(0));

        let r11 = factor_sum(11, Duration::from_secs(2), 0, &lim()).unwrap();
        assert!(!r11.modulus_divides_sum);
        let mf: Vec<String> = r11.modulus_factors.iter().map(|c| c.factor.to_string()).collect();
        assert_eq!(mf, vec!["23", "89"]);
        assert!(r11.is_consistent(0));
    }

    #[test]
    fn family_values() {
        assert_eq!(ExponentFamily::PowPlusOne.value(2, 0), Some(5));
        assert_eq!(ExponentFamily::PowMinusPowPlusOne.value(1, 3), None);
        assert_eq!("2^a - 2^b + 1".parse::<ExponentFamily>().unwrap(), ExponentFamily::PowMinusPowPlusOne);
        assert!("3^a".parse::<ExponentFamily>().is_err());
    }

    #[test]
    fn family_scans() {
        let s = scan_exponent_family(ExponentFamily::PowPlusOne, 2..=2, None, &lim()).unwrap();
        assert_eq!(s.reports.len(), 1);
        assert_eq!(s.reports[0].p, 5);
        let s = scan_exponent_family(ExponentFamily::PowMinusOne, 3..=3, None, &lim()).unwrap();
        assert_eq!(s.reports[0].p, 7);
        let s = scan_exponent_family(ExponentFamily::PowPlusOne, 1..=4, None, &lim()).unwrap();
        let ps: Vec<u32> = s.reports.iter().map(|r| r.p).collect();
        assert_eq!(ps, vec![5, 17]);
        assert_eq!(s.skipped.len(), 2); // 3 is below 5, 9 is not prime
        assert!(matches!(
            scan_exponent_family(ExponentFamily::PowPlusOne, RangeInclusive::new(3, 2), None, &lim()),
            Err(Error::EmptyRange(_))
        ));
        assert!(matches!(
            scan_exponent_family(ExponentFamily::PowPlusPowPlusOne, 2..=3, None, &lim()),
            Err(Error::EmptyRange(_))
        ));
        let s = scan_exponent_family(ExponentFamily::PowPlusPowPlusOne, 2..=4, Some(1..=3), &lim()).unwrap();
        assert!(s.reports.windows(2).all(|w| w[0].p < w[1].p));
    }

    #[test]
    fn divisor_sums() {
        assert_eq!(divisor_sum(12), 28);
        assert_eq!(divisor_sum(28), 56);
        assert_eq!(divisor_sum(1), 1);
    }

    #[test]
    fn reports_round_trip() {
        let r = classify_epsilon_pattern(&partial_sum_trace(7, &lim()).unwrap()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<PatternReport>(&text).unwrap(), r);
        let f = factor_sum(5, Duration::from_secs(5), 0, &lim()).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<FactorReport>(&text).unwrap(), f);
        let t = partial_sum_trace(11, &lim()).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<PartialSumTrace>(&text).unwrap(), t);
    }
}
