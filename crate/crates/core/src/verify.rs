//! Cross-checks between the independent coefficient strategies: the
//! brute-force expansion, the closed forms, the double-index table, the
//! ratio recurrence and the odd-from-even identity.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::{
    in_zero_lane, phi_exact, psi_from_even, psi_ratio, psi_row, psi_row_by_ratio,
    psi_table,
};
use crate::error::Result;
use crate::limits::Limits;
use crate::oracle::{numeric_spot_check, oracle_psi};

/// How many mismatches are listed per check before truncating.
const MAX_LISTED: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: u64,
    pub total: u64,
    /// First few disagreements, for diagnosis.
    #[serde(default)]
    pub mismatches: Vec<String>,
}

impl VerifyCheck {
    fn new(name: &str) -> Self {
        VerifyCheck { name: name.into(), passed: 0, total: 0, mismatches: Vec::new() }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.mismatches.len() < MAX_LISTED {
            self.mismatches.push(what());
        }
    }

    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub n_max: u64,
    pub seed: u64,
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(VerifyCheck::ok)
    }
}

/// Runs every strategy-agreement check for 0 ≤ n ≤ n_max, plus 100 random
/// point evaluations of the expansion drawn with `seed`.
pub fn verify_strategies(n_max: u64, seed: u64, limits: &Limits) -> Result<VerifyReport> {
    let closed: Vec<Vec<BigInt>> = (0..=n_max).map(psi_row).collect::<Result<_>>()?;

    let mut oracle = VerifyCheck::new("oracle_vs_closed_form");
    for n in 0..=n_max {
        let row = oracle_psi(n, limits)?;
        for (k, v) in row.iter().enumerate() {
            oracle.record(v == &closed[n as usize][k], || format!("n={n} k={k}: oracle {v}"));
        }
    }

    let mut table_check = VerifyCheck::new("table_vs_closed_form");
    let table = psi_table(n_max, limits)?;
    for (n, row) in table.rows() {
        for (k, v) in row.iter().enumerate() {
            table_check.record(v == &closed[n as usize][k], || format!("n={n} k={k}: table {v}"));
        }
    }

    let mut ratio = VerifyCheck::new("ratio_vs_closed_form");
    let mut ratio_row = VerifyCheck::new("ratio_row_vs_closed_form");
    let mut zero_lanes = VerifyCheck::new("zero_lanes");
    let mut top = VerifyCheck::new("top_coefficient_one");
    let mut odd = VerifyCheck::new("odd_from_even_vs_closed_form");
    let mut phi = VerifyCheck::new("phi_vs_four_power_psi");
    for n in 0..=n_max {
        let row = &closed[n as usize];
        for k in 2..=n / 2 {
            let (cur, prev) = (&row[k as usize], &row[k as usize - 2]);
            if cur.is_zero() || prev.is_zero() {
                continue;
            }
            let got = psi_ratio(n, k).map(|r| r * BigRational::from_integer(prev.clone()));
            ratio.record(got.as_ref().ok() == Some(&BigRational::from_integer(cur.clone())), || {
                format!("n={n} k={k}: {got:?}")
            });
        }
        let by_ratio = psi_row_by_ratio(n)?;
        ratio_row.record(&by_ratio == row, || format!("n={n}"));
        for k in 0..=n / 2 {
            let v = &row[k as usize];
            if n % 2 == 0 && in_zero_lane(n, k) && k != n / 2 {
                zero_lanes.record(v.is_zero(), || format!("n={n} k={k}: {v}"));
            }
            if n % 2 == 1 {
                let w = psi_from_even(n, k)?;
                odd.record(&w == v, || format!("n={n} k={k}: {w}"));
            }
            let f = phi_exact(n, k)?;
            phi.record(f == v * (BigInt::one() << (2 * k)), || format!("n={n} k={k}: {f}"));
        }
        if n > 0 {
            top.record(row[(n / 2) as usize].is_one(), || format!("n={n}"));
        }
    }

    let mut spots = VerifyCheck::new("numeric_spot_checks");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spot_n = n_max.min(40);
    while spots.total < 100 {
        let n = rng.gen_range(0..=spot_n);
        let x = BigInt::from(rng.gen_range(-10i64..=10));
        let y = BigInt::from(rng.gen_range(-10i64..=10));
        if n % 2 == 1 && (&x + &y).is_zero() {
            continue;
        }
        let ok = numeric_spot_check(n, &x, &y, limits)?;
        spots.record(ok, || format!("n={n} x={x} y={y}"));
    }

    Ok(VerifyReport {
        n_max,
        seed,
        checks: vec![oracle, table_check, ratio, ratio_row, zero_lanes, top, odd, phi, spots],
    })
}
