use std::path::Path;

use equm::learners::LearnerError;
use equm::metrics::MetricsError;
use equm::mdp::RolloutError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration value; the message names the field.
    #[error("{0}")]
    Config(String),
    /// Unreadable or malformed input file.
    #[error("{0}")]
    Input(String),
    /// A checkpoint or policy does not fit the environment.
    #[error("{0}")]
    Incompatible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) | Self::Io(_) => 2,
            Self::Incompatible(_) => 3,
            Self::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Io(format!("{}: {err}", path.display()))
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match &e {
            _ if e.is_numeric() => Self::Numeric(e.to_string()),
            LearnerError::Rollout(r) => rollout_error(r, &e),
            LearnerError::Config(_) => Self::Config(e.to_string()),
            _ => Self::Incompatible(e.to_string()),
        }
    }
}

impl From<RolloutError> for CliError {
    fn from(e: RolloutError) -> Self {
        LearnerError::from(e).into()
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Rollout(r) => r.into(),
            MetricsError::NonFinite(_) | MetricsError::Domain { .. } => Self::Numeric(e.to_string()),
            MetricsError::Csv(_) => Self::Input(e.to_string()),
            MetricsError::TooFewSamples { .. } => Self::Config(e.to_string()),
        }
    }
}

fn rollout_error(r: &RolloutError, outer: &LearnerError) -> CliError {
    match r {
        RolloutError::InvalidDiscount(_) => CliError::Config(outer.to_string()),
        RolloutError::NonFiniteReward { .. } => CliError::Numeric(outer.to_string()),
        _ => CliError::Incompatible(outer.to_string()),
    }
}
