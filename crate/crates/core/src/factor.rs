//! Integer factorization for coefficient sums: trial division by sieved
//! primes, Miller-Rabin, and Brent's variant of Pollard's rho under a time
//! budget. All randomness comes from a caller-supplied seed.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trial division bound.
pub const TRIAL_LIMIT: u32 = 1_000_000;

/// The first twelve primes; as Miller-Rabin bases they are deterministic
/// for every n < 2^64 (in fact below 3.3·10^24).
const DETERMINISTIC_BASES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Extra random bases used above 2^64.
const EXTRA_ROUNDS: usize = 16;

pub fn sieve(limit: u32) -> Vec<u32> {
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for i in 2..=limit {
        if !composite[i] {
            primes.push(i as u32);
            let mut j = i * i;
            while j <= limit {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

fn strong_probable_prime(n: &BigUint, d: &BigUint, s: u64, base: &BigUint) -> bool {
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let mut x = base.modpow(d, n);
    if x == one || x == n_minus_1 {
        return true;
    }
    for _ in 1..s {
        x = &x * &x % n;
        if x == n_minus_1 {
            return true;
        }
        if x == one {
            return false;
        }
    }
    false
}

fn trial_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| sieve(TRIAL_LIMIT))
}

/// Deterministic below 2^64; a strong probable-prime test with
/// [`EXTRA_ROUNDS`] additional seeded random bases above.
pub fn is_probable_prime(n: &BigUint, seed: u64) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &b in &DETERMINISTIC_BASES {
        if n == &BigUint::from(b) {
            return true;
        }
        if (n % b).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().expect("n > 2");
    let d = &n_minus_1 >> s;
    if !DETERMINISTIC_BASES
        .iter()
        .all(|&b| strong_probable_prime(n, &d, s, &BigUint::from(b)))
    {
        return false;
    }
    if n.bits() <= 64 {
        return true;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n.bits());
    (0..EXTRA_ROUNDS).all(|_| {
        let base = rng.gen_biguint_range(&two, &n_minus_1);
        strong_probable_prime(n, &d, s, &base)
    })
}

/// Brent's cycle-finding rho with batched gcds. Returns a nontrivial
/// factor, or `None` if the deadline passes first.
pub fn pollard_brent(n: &BigUint, rng: &mut ChaCha8Rng, deadline: Instant) -> Option<BigUint> {
    let one = BigUint::one();
    if n.is_even() {
        return Some(BigUint::from(2u32));
    }
    const BATCH: u64 = 128;
    loop {
        if Instant::now() >= deadline {
            return None;
        }
        let c = rng.gen_biguint_range(&one, n);
        let f = |x: &BigUint| (x * x + &c) % n;
        let mut y = rng.gen_biguint_range(&one, n);
        let mut r = 1u64;
        let mut q = BigUint::one();
        let mut g = BigUint::one();
        let mut x = y.clone();
        let mut ys = y.clone();
        while g.is_one() {
            x = y.clone();
            for _ in 0..r {
                y = f(&y);
            }
            let mut k = 0u64;
            while k < r && g.is_one() {
                if Instant::now() >= deadline {
                    return None;
                }
                ys = y.clone();
                for _ in 0..BATCH.min(r - k) {
                    y = f(&y);
                    let diff = if x > y { &x - &y } else { &y - &x };
                    q = q * diff % n;
                }
                g = q.gcd(n);
                k += BATCH;
            }
            r *= 2;
        }
        if &g == n {
            // the batch overshot; walk it one step at a time
            loop {
                ys = f(&ys);
                let diff = if x > ys { &x - &ys } else { &ys - &x };
                g = diff.gcd(n);
                if !g.is_one() {
                    break;
                }
            }
        }
        if &g != n {
            return Some(g);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    /// Prime factors with multiplicity.
    pub factors: BTreeMap<BigUint, u32>,
    /// Product of the composite parts that could not be split in budget
    /// (1 when complete).
    pub cofactor: BigUint,
    pub complete: bool,
    pub elapsed: Duration,
}

impl Factorization {
    /// Product of all factors times the cofactor; equals the input.
    pub fn product(&self) -> BigUint {
        self.factors
            .iter()
            .fold(self.cofactor.clone(), |acc, (p, &e)| acc * p.pow(e))
    }
}

/// Factors `n` (n ≥ 1) within `budget`. A zero input has no factorization
/// and is reported as an incomplete cofactor of 0.
pub fn factorize(n: &BigUint, budget: Duration, seed: u64) -> Factorization {
    let started = Instant::now();
    let deadline = started + budget;
    let mut factors = BTreeMap::new();
    if n.is_zero() {
        return Factorization {
            factors,
            cofactor: BigUint::zero(),
            complete: false,
            elapsed: started.elapsed(),
        };
    }
    let mut rest = n.clone();
    for &p in trial_primes() {
        let pb = BigUint::from(p);
        if &pb * &pb > rest {
            break;
        }
        let mut e = 0u32;
        while (&rest % p).is_zero() {
            rest /= p;
            e += 1;
        }
        if e > 0 {
            factors.insert(pb, e);
        }
    }
    let mut cofactor = BigUint::one();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pending = vec![rest];
    while let Some(m) = pending.pop() {
        if m.is_one() {
            continue;
        }
        if is_probable_prime(&m, seed) {
            *factors.entry(m).or_insert(0) += 1;
            continue;
        }
        if let Some(root) = exact_sqrt(&m) {
            pending.push(root.clone());
            pending.push(root);
            continue;
        }
        match pollard_brent(&m, &mut rng, deadline) {
            Some(d) => {
                let other = &m / &d;
                pending.push(d);
                pending.push(other);
            }
            None => cofactor *= m,
        }
    }
    Factorization {
        complete: cofactor.is_one(),
        factors,
        cofactor,
        elapsed: started.elapsed(),
    }
}

fn exact_sqrt(m: &BigUint) -> Option<BigUint> {
    let r = m.sqrt();
    (&r * &r == *m).then_some(r)
}

/// Convenience for small inputs.
pub fn factorize_u64(n: u64) -> Vec<(u64, u32)> {
    factorize(&BigUint::from(n), Duration::from_secs(5), 0)
        .factors
        .into_iter()
        .map(|(p, e)| (p.to_u64().expect("factor of a u64"), e))
        .collect()
}
