//! Experiment harness for the `learnrec` crate.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds_eval;
pub mod config;
pub mod experiment;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{run_rate_experiment, RateRun, RateSummary};
