//! Bayesian amplitude estimation.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: amplitude/angle mapping, Grover and decay likelihoods, the
//!   analytic measurement simulator and query accounting.
//! - [`smc`]: weighted-particle posteriors with ESS-triggered resampling
//!   (Liu-West or random-walk Metropolis), look-ahead utilities and a running
//!   marginal-likelihood estimate.
//! - [`design`]: greedy control selection over an expanding, sparsifying
//!   window of Grover-iteration counts.
//! - [`bae`]: the full adaptive run, including the classical warm-up,
//!   coherence-time pre-estimation and the annealed (ESS-target) variant.
//! - [`reference`]: canonical QAE (exact QPE outcome statistics plus MLE),
//!   the classical sample-mean baseline and MLAE with LIS/EIS schedules.
//! - [`bench`]: benchmark orchestration, binning, power-law fits, the dummy
//!   Heisenberg-limited data generator and file formats used by the CLI.

pub mod bae;
pub mod bench;
pub mod config;
pub mod design;
mod error;
pub mod model;
pub mod reference;
pub mod smc;
pub mod trace;

pub use error::{Error, Result};
