//! Experiment harness for the `equm` library: configuration parsing,
//! training and evaluation runs, parameter sweeps, frontier plots and a
//! walk-forward backtest.

pub mod checks;
pub mod commands;
pub mod config;
pub mod envs;
pub mod error;
pub mod svg;
pub mod walkforward;

pub use config::{ExperimentConfig, Overrides, RawConfig};
pub use error::CliError;
