//! Experiment runner: TOML configs in, CSV and JSON artifacts out.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod problem;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
