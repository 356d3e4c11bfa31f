//! Exact and modular evaluation of the coefficients Ψ_k(n) of
//!
//! ```text
//! (x^n + y^n) / (x + y)^δ(n) = Σ_k Ψ_k(n) (xy)^(⌊n/2⌋-k) (x²+y²)^k
//! ```
//!
//! and of φ_k(n) = 4^k Ψ_k(n). Three routes are provided and kept
//! independent of each other: the residue-class closed forms, the
//! four-term double-index recurrence (as a table), and the two-step ratio
//! recurrence. The modular side evaluates the even-index φ terms needed for
//! Mersenne exponents, either at a single index or as a lazy stream.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{delta, ArbInt, FactorWitness, MersenneModulus, ModOutcome, ResidueClass8};
use crate::error::{Error, Result};
use crate::limits::Limits;

fn big(v: i128) -> BigInt {
    BigInt::from(v)
}

fn sign(e: u64) -> BigInt {
    if e % 2 == 0 {
        BigInt::one()
    } else {
        -BigInt::one()
    }
}

fn factorial(k: u64) -> BigInt {
    (2..=k).fold(BigInt::one(), |acc, j| acc * j)
}

fn exact_div(num: BigInt, den: &BigInt, context: impl FnOnce() -> String) -> Result<BigInt> {
    let (q, r) = num.div_rem(den);
    if !r.is_zero() {
        return Err(Error::InexactDivision(context()));
    }
    Ok(q)
}

fn check_index(n: u64, k: u64) -> Result<()> {
    if k > n / 2 {
        return Err(Error::IndexOutOfRange(format!("k = {k} > ⌊{n}/2⌋")));
    }
    Ok(())
}

/// Ψ_0(n), read off at (x, y) = (1, i).
fn starting_value(n: u64) -> i64 {
    match n % 8 {
        0 => 2,
        1 | 7 => 1,
        2 | 6 => 0,
        3 | 5 => -1,
        _ => -2,
    }
}

/// ∏_{λ=from}^{to} (base² - (4λ - shift)²), empty when `to < from`.
fn diff_square_product(base: &BigInt, from: u64, to: i64, shift: u64) -> BigInt {
    let base_sq = base * base;
    let mut acc = BigInt::one();
    let mut lambda = from as i64;
    while lambda <= to {
        let t = big(4 * lambda as i128 - shift as i128);
        acc *= &base_sq - &t * &t;
        lambda += 1;
    }
    acc
}

/// Numerator over `4^k k!` in the eight closed forms, valid for k ≥ 1.
fn eight_level_numerator(n: u64, k: u64) -> BigInt {
    let h = k / 2;
    let nb = big(n as i128);
    let n1 = big(n as i128 + 1);
    // (n + 1 - 2k)^e with 0^0 = 1
    let tail = |e: u32| -> BigInt {
        if e == 0 {
            BigInt::one()
        } else {
            big(n as i128 + 1 - 2 * k as i128)
        }
    };
    let k_odd = k % 2 == 1;
    match n % 8 {
        0 | 4 => {
            if k_odd {
                return BigInt::zero();
            }
            let s = if n % 8 == 0 { h } else { h + 1 };
            BigInt::from(2) * sign(s) * diff_square_product(&nb, 0, h as i64 - 1, 0)
        }
        2 | 6 => {
            if !k_odd {
                return BigInt::zero();
            }
            let s = if n % 8 == 2 { h } else { h + 1 };
            BigInt::from(2) * sign(s) * &nb * diff_square_product(&nb, 1, h as i64, 2)
        }
        1 | 5 => {
            let s = if n % 8 == 1 { h } else { h + 1 };
            sign(s) * tail(delta(k as i64)) * diff_square_product(&n1, 1, h as i64, 2)
        }
        r => {
            let d_km1 = delta(k as i64 - 1);
            let s = if r == 3 {
                h + d_km1 as u64
            } else {
                h + delta(k as i64) as u64
            };
            let upper = (k as i64 - 1).div_euclid(2);
            sign(s) * &n1 * tail(d_km1) * diff_square_product(&n1, 1, upper, 0)
        }
    }
}

/// Ψ_k(n) from the closed form for the residue class of `n`.
pub fn psi_closed_form(n: u64, k: u64) -> Result<ArbInt> {
    check_index(n, k)?;
    if k == 0 {
        return Ok(BigInt::from(starting_value(n)));
    }
    let den = (BigInt::one() << (2 * k)) * factorial(k);
    exact_div(eight_level_numerator(n, k), &den, || {
        format!("closed form Ψ_{k}({n}) over 4^k k!")
    })
}

/// φ_k(n) = 4^k Ψ_k(n), evaluated from the φ closed forms (division by k!).
pub fn phi_exact(n: u64, k: u64) -> Result<ArbInt> {
    check_index(n, k)?;
    if k == 0 {
        return Ok(BigInt::from(starting_value(n)));
    }
    exact_div(eight_level_numerator(n, k), &factorial(k), || {
        format!("closed form φ_{k}({n}) over k!")
    })
}

/// The full closed-form row [Ψ_0(n), …, Ψ_⌊n/2⌋(n)].
pub fn psi_row(n: u64) -> Result<Vec<ArbInt>> {
    (0..=n / 2).map(|k| psi_closed_form(n, k)).collect()
}

/// Ψ_k(n) for odd `n`, from the even row n + 1 (differential-operator identity).
pub fn psi_from_even(n: u64, k: u64) -> Result<ArbInt> {
    if n % 2 == 0 {
        return Err(Error::InvalidArgument(format!("n = {n} must be odd")));
    }
    check_index(n, k)?;
    let even: Vec<ArbInt> = [k, k + 1]
        .iter()
        .map(|&j| {
            if j <= (n + 1) / 2 {
                psi_closed_form(n + 1, j)
            } else {
                Ok(BigInt::zero())
            }
        })
        .collect::<Result<_>>()?;
    odd_from_even_values(n, k, &even[0], &even[1])
}

fn odd_from_even_values(n: u64, k: u64, psi_k: &BigInt, psi_k1: &BigInt) -> Result<ArbInt> {
    let num = big(2 * (k as i128 + 1)) * psi_k1 + big(((n + 1) / 2) as i128 - k as i128) * psi_k;
    exact_div(num, &big(n as i128 + 1), || {
        format!("odd-from-even Ψ_{k}({n}) over n + 1")
    })
}

/// True where Ψ_k(n) vanishes identically for even n (wrong-parity lane).
pub fn in_zero_lane(n: u64, k: u64) -> bool {
    match n % 8 {
        0 | 4 => k % 2 == 1,
        2 | 6 => k % 2 == 0,
        _ => false,
    }
}

/// Ψ_k(n) / Ψ_{k-2}(n) as an exact rational.
pub fn psi_ratio(n: u64, k: u64) -> Result<BigRational> {
    if k < 2 {
        return Err(Error::IndexOutOfRange(format!("ratio needs k ≥ 2, got {k}")));
    }
    check_index(n, k)?;
    if in_zero_lane(n, k) {
        return Err(Error::UndefinedRatio { n, k });
    }
    let (num, den) = ratio_parts(n, k);
    Ok(BigRational::new(num, den))
}

/// Unreduced numerator and denominator of the Ψ ratio.
fn ratio_parts(n: u64, k: u64) -> (BigInt, BigInt) {
    let dn = delta(n as i64) as i128;
    let shift = if ((n / 2) + k) % 2 == 0 { dn } else { -dn };
    let a = big(n as i128 + shift);
    let b = big(2 * k as i128 - 2 - 2 * delta(n as i64 - 1) as i128);
    let num = -(&a * &a - &b * &b);
    let den = big(16 * k as i128 * (k as i128 - 1));
    (num, den)
}

/// Row n generated by the ratio recurrence from Ψ_0(n) and Ψ_1(n).
pub fn psi_row_by_ratio(n: u64) -> Result<Vec<ArbInt>> {
    let h = n / 2;
    let mut row = Vec::with_capacity(h as usize + 1);
    row.push(BigInt::from(starting_value(n)));
    if h >= 1 {
        row.push(psi_one_seed(n));
    }
    for k in 2..=h {
        if in_zero_lane(n, k) {
            row.push(BigInt::zero());
            continue;
        }
        let (num, den) = ratio_parts(n, k);
        let v = exact_div(&row[k as usize - 2] * num, &den, || {
            format!("ratio step Ψ_{k}({n})")
        })?;
        row.push(v);
    }
    Ok(row)
}

/// Ψ_1(n) from its residue-class table.
fn psi_one_seed(n: u64) -> BigInt {
    let n = n as i128;
    big(match n % 8 {
        0 | 4 => 0,
        1 => (n - 1) / 4,
        2 => n / 2,
        3 => (n + 1) / 4,
        5 => -(n - 1) / 4,
        6 => -n / 2,
        _ => -(n + 1) / 4,
    })
}

/// Even-n φ row by the ratio -(n² - (2k-4)²) / (k(k-1)), exact.
pub fn phi_row_by_ratio(n: u64) -> Result<Vec<ArbInt>> {
    if n % 2 == 1 {
        return Err(Error::InvalidArgument(format!("n = {n} must be even")));
    }
    let h = n / 2;
    let nn = big(n as i128) * big(n as i128);
    let mut row = Vec::with_capacity(h as usize + 1);
    row.push(BigInt::from(starting_value(n)));
    if h >= 1 {
        row.push(psi_one_seed(n) * 4);
    }
    for k in 2..=h {
        if in_zero_lane(n, k) {
            row.push(BigInt::zero());
            continue;
        }
        let t = big(2 * k as i128 - 4);
        let num = -(&nn - &t * &t);
        let den = big(k as i128 * (k as i128 - 1));
        let v = exact_div(&row[k as usize - 2] * num, &den, || {
            format!("ratio step φ_{k}({n})")
        })?;
        row.push(v);
    }
    Ok(row)
}

/// Exact Ψ_k(m) for all 0 ≤ m ≤ n_max, 0 ≤ k ≤ ⌊m/2⌋.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiTable {
    rows: Vec<Vec<ArbInt>>,
}

/// Rows 0, 2, 4, 6, read directly off the expansion.
fn initial_even_rows() -> [Vec<ArbInt>; 4] {
    let r = |v: &[i64]| v.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>();
    [r(&[2]), r(&[0, 1]), r(&[-2, 0, 1]), r(&[0, -3, 0, 1])]
}

impl PsiTable {
    pub fn n_max(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    pub fn get(&self, m: u64, k: u64) -> Option<&ArbInt> {
        self.rows.get(m as usize)?.get(k as usize)
    }

    pub fn row(&self, m: u64) -> Option<&[ArbInt]> {
        self.rows.get(m as usize).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (u64, &[ArbInt])> {
        self.rows.iter().enumerate().map(|(m, r)| (m as u64, r.as_slice()))
    }

    /// CSV with header `n,k,psi`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,k,psi")?;
        for (m, row) in self.rows() {
            for (k, v) in row.iter().enumerate() {
                writeln!(out, "{m},{k},{v}")?;
            }
        }
        Ok(())
    }
}

/// Builds the table with Ψ_k(n) = Ψ_{k-1}(n-2) - Ψ_k(n-4) on even rows and
/// derives odd rows from the even row above them.
pub fn psi_table(n_max: u64, limits: &Limits) -> Result<PsiTable> {
    if n_max > limits.max_table {
        return Err(Error::CapExceeded {
            what: "table n_max",
            value: n_max,
            cap: limits.max_table,
        });
    }
    let top_even = n_max + n_max % 2;
    let mut even: Vec<Vec<ArbInt>> = Vec::with_capacity(top_even as usize / 2 + 1);
    for (i, seed) in initial_even_rows().into_iter().enumerate() {
        if (2 * i) as u64 <= top_even {
            even.push(seed);
        }
    }
    let mut m = 8u64;
    while m <= top_even {
        let i = (m / 2) as usize;
        let (two_back, four_back) = (&even[i - 1], &even[i - 2]);
        let row: Vec<ArbInt> = (0..=m / 2)
            .map(|k| {
                let left = if k >= 1 { two_back[k as usize - 1].clone() } else { BigInt::zero() };
                let right = four_back.get(k as usize).cloned().unwrap_or_default();
                left - right
            })
            .collect();
        even.push(row);
        m += 2;
    }

    let mut rows = Vec::with_capacity(n_max as usize + 1);
    for m in 0..=n_max {
        if m % 2 == 0 {
            rows.push(even[(m / 2) as usize].clone());
        } else {
            let above = &even[((m + 1) / 2) as usize];
            let zero = BigInt::zero();
            let row = (0..=m / 2)
                .map(|k| {
                    let k1 = above.get(k as usize + 1).unwrap_or(&zero);
                    odd_from_even_values(m, k, &above[k as usize], k1)
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
    }
    Ok(PsiTable { rows })
}

/// One even-index φ term reduced mod M = 2^p - 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiTermMod {
    pub k: u64,
    #[serde(with = "crate::bigser::biguint")]
    pub residue: BigUint,
    /// Exponent of the modulus the residue lives in.
    pub p: u32,
}

impl PhiTermMod {
    pub fn signed(&self, modulus: &MersenneModulus) -> BigInt {
        modulus.signed(&self.residue)
    }
}

/// Enforces the Mersenne-exponent preconditions shared by the modular paths.
pub(crate) fn stream_half(modulus: &MersenneModulus) -> Result<u64> {
    let p = modulus.exponent();
    if p < 5 {
        return Err(Error::ExponentTooSmall { p, min: 5 });
    }
    if p > 62 {
        return Err(Error::CapExceeded {
            what: "streamed exponent p",
            value: p as u64,
            cap: 62,
        });
    }
    Ok(modulus.half_u64().expect("p ≤ 62"))
}

/// φ_k(n) mod M as ±2·∏(n² - (4λ)²)·(k!)⁻¹, n = 2^(p-1).
pub fn phi_term_mod_at(modulus: &MersenneModulus, k: u64) -> Result<ModOutcome<PhiTermMod>> {
    let n = stream_half(modulus)?;
    if k % 2 == 1 {
        return Err(Error::InvalidArgument(format!("k = {k} must be even")));
    }
    check_index(n, k)?;
    let n_sq = modulus.from_u128(n as u128 * n as u128);
    let mut prod = BigUint::one();
    for lambda in 0..k / 2 {
        let t = 4 * lambda as u128;
        prod = modulus.mul(&prod, &modulus.sub(&n_sq, &modulus.from_u128(t * t)));
    }
    let mut fact = BigUint::one();
    for j in 2..=k {
        fact = modulus.mul(&fact, &BigUint::from(j));
    }
    let inv = match modulus.inverse(&fact) {
        Ok(inv) => inv,
        Err(_) => return witness_or_fail(modulus.witness_in_range(2, k)),
    };
    let mut residue = modulus.mul(&modulus.mul(&prod, &inv), &BigUint::from(2u32));
    if (k / 2) % 2 == 1 {
        residue = modulus.neg(&residue);
    }
    Ok(ModOutcome::Value(PhiTermMod {
        k,
        residue,
        p: modulus.exponent(),
    }))
}

fn witness_or_fail<T>(w: Option<FactorWitness>) -> Result<ModOutcome<T>> {
    w.map(ModOutcome::Witness).ok_or_else(|| {
        Error::Consistency("modular inverse failed but no proper factor of M was found".into())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(Error::InvalidArgument(format!("unknown direction {other:?}"))),
        }
    }
}

/// The multiplier taking the term at `k` to the next term in `direction`,
/// as (numerator residue, denominator factors).
struct Step {
    num: BigUint,
    den: [u128; 2],
}

/// Shared state for moving along the even-k φ terms mod M.
#[derive(Debug, Clone)]
struct Walker {
    modulus: MersenneModulus,
    direction: Direction,
    n: u64,
    n_sq: BigUint,
}

impl Walker {
    fn new(modulus: &MersenneModulus, direction: Direction) -> Result<Self> {
        let n = stream_half(modulus)?;
        Ok(Walker {
            modulus: modulus.clone(),
            direction,
            n,
            n_sq: modulus.from_u128(n as u128 * n as u128),
        })
    }

    fn first_k(&self) -> u64 {
        match self.direction {
            Direction::Forward => 0,
            Direction::Backward => self.n / 2,
        }
    }

    fn first_residue(&self) -> BigUint {
        match self.direction {
            Direction::Forward => BigUint::from(2u32),
            Direction::Backward => self
                .modulus
                .pow(&BigUint::from(2u32), &BigUint::from(self.n)),
        }
    }

    fn next_k(&self, k: u64) -> Option<u64> {
        match self.direction {
            Direction::Forward => (k + 2 <= self.n / 2).then_some(k + 2),
            Direction::Backward => k.checked_sub(2),
        }
    }

    /// Index position of `k` along the walk (0 for the first term).
    fn position(&self, k: u64) -> u64 {
        match self.direction {
            Direction::Forward => k / 2,
            Direction::Backward => (self.n / 2 - k) / 2,
        }
    }

    fn k_at(&self, position: u64) -> u64 {
        match self.direction {
            Direction::Forward => 2 * position,
            Direction::Backward => self.n / 2 - 2 * position,
        }
    }

    fn len(&self) -> u64 {
        self.n / 4 + 1
    }

    /// Multiplier from the term at `k` to the term after it.
    fn step(&self, k: u64) -> Step {
        let m = &self.modulus;
        match self.direction {
            Direction::Forward => {
                // φ_{k+2}/φ_k = -(n² - (2k)²) / ((k+2)(k+1))
                let t = 2 * k as u128;
                let num = m.neg(&m.sub(&self.n_sq, &m.from_u128(t * t)));
                Step { num, den: [k as u128 + 2, k as u128 + 1] }
            }
            Direction::Backward => {
                // φ_{k-2}/φ_k = -k(k-1) / ((n - 2k + 4)(n + 2k - 4))
                let num = m.neg(&m.from_u128(k as u128 * (k as u128 - 1)));
                let (n, k) = (self.n as u128, k as u128);
                Step { num, den: [n + 4 - 2 * k, n + 2 * k - 4] }
            }
        }
    }

    fn apply(&self, current: &BigUint, step: &Step) -> ModOutcome<BigUint> {
        let m = &self.modulus;
        match m.inverse_small(step.den[0] * step.den[1]) {
            Ok(inv) => ModOutcome::Value(m.mul(&m.mul(current, &step.num), &inv)),
            Err(_) => match m.witness_among(step.den) {
                Some(w) => ModOutcome::Witness(w),
                None => unreachable!("both factors lie strictly between 1 and M"),
            },
        }
    }
}

/// Lazy, single-consumer stream of the even-index φ terms mod M.
///
/// Forward starts at k = 0 with φ_0 = 2; backward starts at k = ⌊n/2⌋ with
/// 2^n mod M. Each further term costs one multiply and one small inverse.
/// A failed inverse yields a [`FactorWitness`] and ends the stream.
#[derive(Debug, Clone)]
pub struct PhiStream {
    walker: Walker,
    state: Option<(u64, BigUint)>,
    started: bool,
}

/// Opens a stream over φ_k(2^(p-1)) mod 2^p - 1, p ≥ 5.
pub fn phi_stream_mod(modulus: &MersenneModulus, direction: Direction) -> Result<PhiStream> {
    let walker = Walker::new(modulus, direction)?;
    Ok(PhiStream {
        state: Some((walker.first_k(), walker.first_residue())),
        walker,
        started: false,
    })
}

impl PhiStream {
    pub fn direction(&self) -> Direction {
        self.walker.direction
    }

    pub fn modulus(&self) -> &MersenneModulus {
        &self.walker.modulus
    }

    /// Starts at an arbitrary even `k` with a known residue.
    fn resume(walker: Walker, k: u64, residue: BigUint) -> Self {
        PhiStream {
            walker,
            state: Some((k, residue)),
            started: false,
        }
    }
}

impl Iterator for PhiStream {
    type Item = ModOutcome<PhiTermMod>;

    fn next(&mut self) -> Option<Self::Item> {
        let p = self.walker.modulus.exponent();
        if !self.started {
            self.started = true;
            let (k, r) = self.state.as_ref()?;
            return Some(ModOutcome::Value(PhiTermMod { k: *k, residue: r.clone(), p }));
        }
        let (k, current) = self.state.take()?;
        let next_k = self.walker.next_k(k)?;
        let step = self.walker.step(k);
        match self.walker.apply(&current, &step) {
            ModOutcome::Value(residue) => {
                self.state = Some((next_k, residue.clone()));
                Some(ModOutcome::Value(PhiTermMod { k: next_k, residue, p }))
            }
            ModOutcome::Witness(w) => Some(ModOutcome::Witness(w)),
        }
    }
}

/// Σ φ_k(n) mod M over even k, with the number of terms consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiSum {
    pub residue: BigUint,
    pub terms: u64,
}

/// Outcome of summing a stream: the sum, or a witness plus the number of
/// terms that were evaluated before it surfaced.
pub type StreamSum = (ModOutcome<PhiSum>, u64);

/// Sums the stream, optionally split into `parallelism` chunks.
///
/// The chunked path first multiplies out the step ratios of every chunk in
/// parallel, chains them sequentially to get each chunk's starting term,
/// then streams each chunk on its own. Residues are canonical, so the
/// result is bit-identical to the sequential sum.
pub fn phi_sum_mod(modulus: &MersenneModulus, direction: Direction, parallelism: usize) -> Result<StreamSum> {
    let walker = Walker::new(modulus, direction)?;
    let total = walker.len();
    let chunks = (parallelism.max(1) as u64).min(total);
    if chunks <= 1 {
        return Ok(sum_sequential(phi_stream_mod(modulus, direction)?, modulus));
    }
    let m = &walker.modulus;
    let bounds: Vec<(u64, u64)> = (0..chunks)
        .map(|c| (c * total / chunks, (c + 1) * total / chunks))
        .collect();

    // Ratio from the first term of each chunk to the first term of the next.
    let transitions: Vec<(BigUint, BigUint)> = bounds[..bounds.len() - 1]
        .par_iter()
        .map(|&(lo, hi)| {
            let mut num = BigUint::one();
            let mut den = BigUint::one();
            for pos in lo..hi {
                let s = walker.step(walker.k_at(pos));
                num = m.mul(&num, &s.num);
                den = m.mul(&den, &m.from_u128(s.den[0] * s.den[1]));
            }
            (num, den)
        })
        .collect();

    let mut seeds = vec![walker.first_residue()];
    for (num, den) in &transitions {
        match m.inverse(den) {
            Ok(inv) => {
                let prev = seeds.last().expect("seeded");
                seeds.push(m.mul(&m.mul(prev, num), &inv));
            }
            // The sequential walk finds the same witness at the same index.
            Err(_) => return Ok(sum_sequential(phi_stream_mod(modulus, direction)?, modulus)),
        }
    }

    let partials: Vec<BigUint> = bounds
        .par_iter()
        .zip(seeds.into_par_iter())
        .map(|(&(lo, hi), seed)| {
            let stream = PhiStream::resume(walker.clone(), walker.k_at(lo), seed);
            stream
                .take((hi - lo) as usize)
                .map(|t| t.value().expect("chunk denominators are invertible").residue)
                .fold(BigUint::zero(), |acc, r| m.add(&acc, &r))
        })
        .collect();
    let residue = partials.iter().fold(BigUint::zero(), |acc, r| m.add(&acc, r));
    Ok((ModOutcome::Value(PhiSum { residue, terms: total }), total))
}

fn sum_sequential(stream: PhiStream, modulus: &MersenneModulus) -> StreamSum {
    let mut acc = BigUint::zero();
    let mut terms = 0u64;
    for item in stream {
        match item {
            ModOutcome::Value(t) => {
                acc = modulus.add(&acc, &t.residue);
                terms += 1;
            }
            ModOutcome::Witness(w) => return (ModOutcome::Witness(w), terms),
        }
    }
    (ModOutcome::Value(PhiSum { residue: acc, terms }), terms)
}

/// Starting residues of each chunk as used by [`phi_sum_mod`]; exposed for
/// checking them against [`phi_term_mod_at`].
pub fn chunk_seed_indices(modulus: &MersenneModulus, direction: Direction, chunks: usize) -> Result<Vec<u64>> {
    let walker = Walker::new(modulus, direction)?;
    let total = walker.len();
    let chunks = (chunks.max(1) as u64).min(total);
    Ok((0..chunks).map(|c| walker.k_at(c * total / chunks)).collect())
}

#[doc(hidden)]
pub fn walk_position(modulus: &MersenneModulus, direction: Direction, k: u64) -> Result<u64> {
    Ok(Walker::new(modulus, direction)?.position(k))
}

/// Sign of an integer as -1, 0 or +1.
pub fn signum(v: &BigInt) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

impl ResidueClass8 {
    /// Ψ_0 for this residue class.
    pub fn starting_value(self) -> i64 {
        starting_value(self.value() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(psi_closed_form(16, 0).unwrap(), BigInt::from(2));
        assert_eq!(psi_closed_form(6, 1).unwrap(), BigInt::from(-3));
        assert_eq!(psi_closed_form(16, 2).unwrap(), BigInt::from(-16));
        assert_eq!(psi_closed_form(1, 0).unwrap(), BigInt::from(1));
        for n in [4u64, 8, 16] {
            assert_eq!(psi_closed_form(n, n / 2).unwrap(), BigInt::one());
        }
    }

    #[test]
    fn closed_form_index_guard() {
        assert!(matches!(psi_closed_form(6, 4), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(phi_exact(6, 4), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn table_examples() {
        let limits = Limits::default();
        let t = psi_table(6, &limits).unwrap();
        assert_eq!(t.row(6).unwrap(), ints(&[0, -3, 0, 1]).as_slice());
        let t0 = psi_table(0, &limits).unwrap();
        assert_eq!(t0.n_max(), 0);
        assert_eq!(t0.row(0).unwrap(), ints(&[2]).as_slice());
        assert!(t.get(6, 4).is_none());
    }

    #[test]
    fn table_respects_cap() {
        let limits = Limits { max_table: 10, ..Limits::default() };
        assert!(matches!(psi_table(11, &limits), Err(Error::CapExceeded { .. })));
        assert!(psi_table(10, &limits).is_ok());
    }

    #[test]
    fn table_csv_header_and_rows() {
        let t = psi_table(6, &Limits::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,k,psi\n0,0,2\n"));
        assert!(text.contains("\n6,1,-3\n"));
    }

    #[test]
    fn odd_from_even_examples() {
        assert_eq!(psi_from_even(3, 1).unwrap(), BigInt::from(1));
        assert_eq!(psi_from_even(1, 0).unwrap(), BigInt::from(1));
        assert_eq!(psi_from_even(7, 0).unwrap(), BigInt::from(1));
        assert!(matches!(psi_from_even(4, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ratio_examples() {
        let r = |a: i64, b: i64| BigRational::new(BigInt::from(a), BigInt::from(b));
        assert_eq!(psi_ratio(16, 4).unwrap(), r(-5, 4));
        assert_eq!(psi_ratio(16, 2).unwrap(), r(-8, 1));
        assert_eq!(psi_ratio(8, 2).unwrap(), r(-2, 1));
        assert_eq!(psi_ratio(16, 3), Err(Error::UndefinedRatio { n: 16, k: 3 }));
        assert_eq!(psi_ratio(10, 2), Err(Error::UndefinedRatio { n: 10, k: 2 }));
        assert!(psi_ratio(16, 1).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_exact(16, 2).unwrap(), BigInt::from(-256));
        assert_eq!(phi_exact(16, 8).unwrap(), BigInt::from(65536));
        assert_eq!(phi_exact(16, 1).unwrap(), BigInt::zero());
        assert_eq!(phi_exact(16, 4).unwrap(), BigInt::from(5120));
    }

    #[test]
    fn phi_matches_four_power_psi() {
        for n in 0..=40u64 {
            for k in 0..=n / 2 {
                let psi = psi_closed_form(n, k).unwrap();
                assert_eq!(phi_exact(n, k).unwrap(), psi * (BigInt::one() << (2 * k)), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn phi_ratio_row_matches_closed_form() {
        for n in (0..=64u64).step_by(2) {
            let row = phi_row_by_ratio(n).unwrap();
            for (k, v) in row.iter().enumerate() {
                assert_eq!(v, &phi_exact(n, k as u64).unwrap(), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn modular_point_examples() {
        let m = MersenneModulus::new(5).unwrap();
        let at = |k| phi_term_mod_at(&m, k).unwrap().value().unwrap().residue;
        assert_eq!(at(2), BigUint::from(23u32));
        assert_eq!(at(4), BigUint::from(5u32));
        assert_eq!(at(0), BigUint::from(2u32));
        assert_eq!(at(8), BigUint::from(2u32));
        assert!(matches!(phi_term_mod_at(&m, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(phi_term_mod_at(&m, 10), Err(Error::IndexOutOfRange(_))));
        let small = MersenneModulus::new(3).unwrap();
        assert!(matches!(phi_term_mod_at(&small, 0), Err(Error::ExponentTooSmall { .. })));
    }

    #[test]
    fn modular_point_witness_for_composite() {
        let m = MersenneModulus::new(11).unwrap();
        let out = phi_term_mod_at(&m, 24).unwrap();
        assert_eq!(out.witness().unwrap().divisor(), &BigUint::from(23u32));
        // M | k! here, so the witness must come from the scan, not the gcd.
        let out = phi_term_mod_at(&m, 100).unwrap();
        assert_eq!(out.witness().unwrap().divisor(), &BigUint::from(23u32));
        assert!(phi_term_mod_at(&m, 22).unwrap().value().is_some());
    }

    #[test]
    fn stream_examples() {
        let m = MersenneModulus::new(5).unwrap();
        let fwd: Vec<u32> = phi_stream_mod(&m, Direction::Forward)
            .unwrap()
            .map(|t| t.value().unwrap().residue.try_into().unwrap())
            .collect();
        assert_eq!(fwd, vec![2, 23, 5, 30, 2]);
        let bwd: Vec<(u64, u32)> = phi_stream_mod(&m, Direction::Backward)
            .unwrap()
            .map(|t| {
                let t = t.value().unwrap();
                (t.k, t.residue.try_into().unwrap())
            })
            .collect();
        assert_eq!(bwd, vec![(8, 2), (6, 30), (4, 5), (2, 23), (0, 2)]);

        let m7 = MersenneModulus::new(7).unwrap();
        let second = phi_stream_mod(&m7, Direction::Forward).unwrap().nth(1).unwrap();
        // -n² = -4096 = -(32·127 + 32) ≡ 95 (mod 127)
        assert_eq!(second.value().unwrap().residue, BigUint::from(95u32));
    }

    #[test]
    fn stream_stops_at_witness() {
        let m = MersenneModulus::new(11).unwrap();
        let items: Vec<_> = phi_stream_mod(&m, Direction::Forward).unwrap().collect();
        let last = items.last().unwrap();
        assert_eq!(last.witness().unwrap().divisor(), &BigUint::from(23u32));
        // k = 0, 2, …, 22 are fine; stepping to k = 24 divides by 24·23.
        assert_eq!(items.len(), 13);
    }

    #[test]
    fn parallel_sum_is_identical() {
        for p in [7u32, 13, 17] {
            let m = MersenneModulus::new(p).unwrap();
            for dir in [Direction::Forward, Direction::Backward] {
                let seq = phi_sum_mod(&m, dir, 1).unwrap();
                for par in [2usize, 3, 8] {
                    assert_eq!(phi_sum_mod(&m, dir, par).unwrap(), seq, "p={p} {dir} x{par}");
                }
            }
        }
        let m = MersenneModulus::new(11).unwrap();
        let (seq, _) = phi_sum_mod(&m, Direction::Forward, 1).unwrap();
        let (par, _) = phi_sum_mod(&m, Direction::Forward, 4).unwrap();
        assert_eq!(seq, par);
        assert!(par.witness().is_some());
    }

    #[test]
    fn chunk_seeds_match_point_evaluation() {
        let m = MersenneModulus::new(13).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let ks = chunk_seed_indices(&m, dir, 5).unwrap();
            let stream: Vec<PhiTermMod> = phi_stream_mod(&m, dir).unwrap().map(|t| t.value().unwrap()).collect();
            for k in ks {
                let pos = walk_position(&m, dir, k).unwrap() as usize;
                let direct = phi_term_mod_at(&m, k).unwrap().value().unwrap();
                assert_eq!(stream[pos], direct);
            }
        }
    }
}
