use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A division that must be exact left a remainder. This contradicts a
    /// proven identity, so it is never rounded away.
    #[error("internal consistency failure: inexact division in {0}")]
    InexactDivision(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("{what} = {value} exceeds the configured cap of {cap}")]
    CapExceeded {
        what: &'static str,
        value: u64,
        cap: u64,
    },

    #[error("exponent {0} is not prime")]
    NotPrime(u64),

    #[error("exponent {p} is below the minimum of {min}")]
    ExponentTooSmall { p: u32, min: u32 },

    #[error("ratio undefined at n = {n}, k = {k}: both terms lie in a zero lane")]
    UndefinedRatio { n: u64, k: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty range: {0}")]
    EmptyRange(String),
}

impl Error {
    /// True for failures that indicate a broken identity rather than bad input.
    pub fn is_consistency_failure(&self) -> bool {
        matches!(self, Error::InexactDivision(_) | Error::Consistency(_))
    }
}
