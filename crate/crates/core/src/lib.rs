//! Coefficient sequences of the eight-level expansion of x^n + y^n and the
//! Mersenne primality tests built on them.

pub mod arith;
mod bigser;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod explore;
pub mod factor;
pub mod identities;
pub mod limits;
pub mod oracle;
pub mod primality;
pub mod verify;

pub use arith::{ArbInt, FactorWitness, MersenneModulus, ModOutcome, ResidueClass8};
pub use coefficients::{Direction, PhiStream, PhiTermMod, PsiTable};
pub use error::{Error, Result};
pub use limits::Limits;
pub use oracle::SymmetricPoly;
pub use primality::{TestVerdict, Variant, Verdict};
