//! Forecast elicitation, pooling, aggregation, online learning, and
//! agreement machinery over finite information structures.
//!
//! The crate is organized around a few core objects:
//!
//! - [`scoring::ScoringRule`]: proper scoring rules via their Savage
//!   representation (expected-score function `G` and exposure `g`), with
//!   Bregman and Jensen-Bregman divergences.
//! - [`incentivization`]: normalization of binary rules, the power
//!   incentivization index, optimal and near-optimal polynomial rules, and
//!   Monte Carlo simulation of a coin-flipping expert.
//! - [`pooling`]: linear, logarithmic, generalized, and quasi-arithmetic
//!   pooling with worst-case profit guarantees.
//! - [`learning`]: online gradient descent and online mirror descent for
//!   expert weights, with regret measurement.
//! - [`infostruct::InformationStructure`]: finite tables of states with
//!   per-expert signals, conditional expectations, and substitutes checkers.
//! - [`robust`]: aggregation strategies (averaging, extremization) and
//!   approximation-ratio evaluation.
//! - [`contracts`]: multi-expert contract functions and arbitrage searches.
//! - [`agreement`]: two-expert communication protocols (exact exchange,
//!   discretized, Bregman-discretized, rounding) and agreement metrics.
//!
//! All randomized operations take explicit seeds; independent trials derive
//! per-trial streams so results are reproducible under parallelism.

pub mod agreement;
pub mod contracts;
pub mod error;
pub mod incentivization;
pub mod infostruct;
pub mod learning;
pub mod numeric;
pub mod pooling;
pub mod robust;
pub mod rng;
pub mod scoring;

pub use error::{Error, Result};
pub use scoring::{Forecast, ScoringRule};
