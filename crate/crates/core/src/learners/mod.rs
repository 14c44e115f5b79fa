//! Policy-gradient learners: risk-neutral, expected quadratic utility,
//! variance-penalized and dual mean-variance baselines, and an actor-critic
//! variant of the quadratic-utility learner.

mod ac;
mod double_sampling;
mod estimators;
mod train;
mod utility;

use thiserror::Error;

use crate::mdp::RolloutError;
use crate::policy::{OptimError, PolicyError};

pub use ac::{ac_episode_gradient, ac_targets, train_equm_ac, AcConfig, AcTargets, Critic, LinearCritic};
pub use double_sampling::{compare_double_sampling_demo, DoubleSamplingReport};
pub use estimators::{
    accumulate_score, episode_gradient_dual, episode_gradient_equm, episode_gradient_reinforce,
    episode_gradient_second_moment, score_sum,
};
pub use train::{
    train_equm_pg, train_policy_gradient, train_reinforce, train_tamar, train_xie, LogRow, Objective, Penalty,
    TamarConfig, TrainOptions, TrainReport, TrainingLog, XieConfig, EVAL_SEED_DOMAIN, LOG_HEADER,
};
pub use utility::UtilitySpec;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("non-finite {what} after episode {episode}")]
    NonFinite { episode: usize, what: &'static str },
    #[error("optimizer rejected update after episode {episode}: {source}")]
    Optim { episode: usize, source: OptimError },
    #[error("moment tracker diverged after episode {episode} (mean {mean}, second moment {second})")]
    TrackerDiverged { episode: usize, mean: f64, second: f64 },
    #[error("critic loss is non-finite after episode {episode}")]
    CriticDiverged { episode: usize },
}

impl LearnerError {
    /// Numeric failures, as opposed to configuration or compatibility errors.
    pub fn is_numeric(&self) -> bool {
        match self {
            Self::NonFinite { .. } | Self::Optim { .. } | Self::TrackerDiverged { .. } | Self::CriticDiverged { .. } => true,
            Self::Rollout(RolloutError::NonFiniteReward { .. }) => true,
            Self::Rollout(RolloutError::Policy(PolicyError::NonFinite)) | Self::Policy(PolicyError::NonFinite) => true,
            _ => false,
        }
    }
}
