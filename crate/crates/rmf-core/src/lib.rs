//! Desk-scale machinery for random multiplicative functions: sieve-backed
//! arithmetic, construction of the studied integer sets, exact multiplicative
//! energy and condition-sum counting, reproducible Steinhaus/Rademacher
//! sampling, normality diagnostics, and continued-fraction tools for twisted
//! sums.

pub mod diophantine;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod gaussianity;
pub mod rng;
pub mod sampler;
pub mod sets;
pub mod sieve;

pub use error::{Error, Result};
pub use sets::WeightedSet;
pub use sieve::SieveTable;
