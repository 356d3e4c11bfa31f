//! Resource caps shared by the quadratic and exponential code paths.

use serde::{Deserialize, Serialize};

/// Environment variable that overrides [`Limits::max_table`].
pub const MAX_TABLE_ENV: &str = "MERSENNE_LAB_MAX_TABLE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Largest row index for the double-index tables (psi table, v1 rows).
    pub max_table: u64,
    /// Largest `n` for the brute-force expansion oracle.
    pub max_oracle_n: u64,
    /// Largest exponent for exact (non-modular) coefficient sums.
    pub max_exact_sum_p: u32,
    /// Largest exponent for stored partial-sum traces.
    pub max_trace_p: u32,
    /// Largest exponent accepted by the streaming tests.
    pub max_stream_p: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_table: 4096,
            max_oracle_n: 512,
            max_exact_sum_p: 13,
            max_trace_p: 21,
            max_stream_p: 40,
        }
    }
}

impl Limits {
    /// Defaults, with the table cap taken from the environment when set.
    pub fn from_env() -> Self {
        let mut limits = Limits::default();
        if let Some(cap) = std::env::var(MAX_TABLE_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .filter(|&v| v > 0)
        {
            limits.max_table = cap;
        }
        limits
    }
}
