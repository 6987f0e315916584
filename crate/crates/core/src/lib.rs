//! Simulation of Brownian local time via upcrossing counts of the dyadic
//! random-walk embedding.
//!
//! The library builds the embedded walk whose steps are the successive times
//! Brownian motion moves by 2^{-k}, counts completed upcrossings per dyadic
//! cell, and measures how fast the normalized upcrossing estimator converges
//! to local time. Experiments are reproducible Monte Carlo runs with
//! counter-based per-path random streams and bit-exact CSV/JSON reports.

pub mod config;
pub mod deviation;
pub mod error;
pub mod experiments;
pub mod exit_time;
pub mod field;
pub mod grid;
pub mod pipeline;
pub mod pvariation;
pub mod report;
pub mod rng;
pub mod skeleton;
pub mod stats;

pub use config::{ExperimentConfig, Mode};
pub use deviation::{normalizer, DeviationStatistics, LocalTimeProxy};
pub use error::{Error, Result};
pub use exit_time::ExitTimeLaw;
pub use field::{level_index, UpcrossingField};
pub use pvariation::{pvar_field, pvar_sequence, sup_pvar_over_time, VariationResult};
pub use report::ExperimentReport;
pub use skeleton::CrossingSkeleton;
