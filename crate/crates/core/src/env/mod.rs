//! Concrete environments.

mod dataset;
mod option;
mod portfolio;

use thiserror::Error;

pub use dataset::{
    load_returns_csv, parse_returns_csv, portfolio_return, write_returns_csv, DatasetPortfolioConfig, DatasetPortfolioEnv,
    DatasetState, FormatSpec, IngestError, ReturnsMatrix, SentinelPolicy, Units,
};
pub use option::{OptionEnv, OptionEnvConfig, OptionState};
pub use portfolio::{PortfolioState, PortfolioSynth, PortfolioSynthConfig, Position, RateLock};

#[derive(Debug, Error, PartialEq)]
#[error("invalid environment configuration: {0}")]
pub struct ConfigError(pub String);

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError(msg()))
    }
}

pub(crate) fn ensure_prob(name: &str, p: f64) -> Result<(), ConfigError> {
    ensure((0.0..=1.0).contains(&p), || format!("{name} must be a probability, got {p}"))
}
