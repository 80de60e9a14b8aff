//! Experiment runner for `ufd-core`: JSON configs in, CSV/JSON artifacts out.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails,
//! 2 for config errors, 3 for solver failures (partial artifacts are kept).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod report;

pub use commands::{compare, moser, run, Completed, MoserArgs, Overrides};
pub use config::ExperimentConfig;
pub use error::CliError;
