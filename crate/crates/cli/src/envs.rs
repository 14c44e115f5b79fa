use std::sync::Arc;

use equm::env::{
    load_returns_csv, DatasetPortfolioEnv, DatasetState, OptionEnv, OptionState, PortfolioState, PortfolioSynth,
    ReturnsMatrix,
};
use equm::mdp::{ActionId, Environment, StateVec, Step};
use equm::policy::{MlpPolicy, ValueNet};
use equm::rng::{derive_seed, RngStream};

use crate::config::{EnvSpec, ExperimentConfig};
use crate::error::CliError;

const INIT_DOMAIN: u64 = 0x696e_6974;

/// Whichever environment the config selected.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    Portfolio(PortfolioSynth),
    Option(OptionEnv),
    Dataset(DatasetPortfolioEnv),
}

#[derive(Clone, Debug)]
pub enum AnyState {
    Portfolio(PortfolioState),
    Option(OptionState),
    Dataset(DatasetState),
}

macro_rules! dispatch {
    ($env:expr, $e:ident => $body:expr) => {
        match $env {
            AnyEnv::Portfolio($e) => $body,
            AnyEnv::Option($e) => $body,
            AnyEnv::Dataset($e) => $body,
        }
    };
}

impl AnyEnv {
    pub fn build(spec: &EnvSpec) -> Result<Self, CliError> {
        let bad = |e: equm::env::ConfigError| CliError::Config(e.to_string());
        Ok(match spec {
            EnvSpec::PortfolioSynth(c) => Self::Portfolio(PortfolioSynth::new(c.clone()).map_err(bad)?),
            EnvSpec::Option(c) => Self::Option(OptionEnv::new(c.clone()).map_err(bad)?),
            EnvSpec::Dataset(d) => {
                let data = load_dataset(&d.path, &d.format)?;
                Self::Dataset(DatasetPortfolioEnv::new(data, d.env.clone()).map_err(bad)?)
            }
        })
    }
}

pub fn load_dataset(path: &std::path::Path, format: &equm::env::FormatSpec) -> Result<Arc<ReturnsMatrix>, CliError> {
    load_returns_csv(path, format)
        .map(Arc::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl Environment for AnyEnv {
    type State = AnyState;

    fn action_count(&self) -> usize {
        dispatch!(self, e => e.action_count())
    }

    fn state_dim(&self) -> usize {
        dispatch!(self, e => e.state_dim())
    }

    fn horizon_cap(&self) -> usize {
        dispatch!(self, e => e.horizon_cap())
    }

    fn reset(&self, rng: &mut RngStream) -> AnyState {
        match self {
            Self::Portfolio(e) => AnyState::Portfolio(e.reset(rng)),
            Self::Option(e) => AnyState::Option(e.reset(rng)),
            Self::Dataset(e) => AnyState::Dataset(e.reset(rng)),
        }
    }

    fn observe(&self, state: &AnyState) -> StateVec {
        match (self, state) {
            (Self::Portfolio(e), AnyState::Portfolio(s)) => e.observe(s),
            (Self::Option(e), AnyState::Option(s)) => e.observe(s),
            (Self::Dataset(e), AnyState::Dataset(s)) => e.observe(s),
            _ => unreachable!("state from a different environment"),
        }
    }

    fn step(&self, state: &mut AnyState, action: ActionId, rng: &mut RngStream) -> Step {
        match (self, state) {
            (Self::Portfolio(e), AnyState::Portfolio(s)) => e.step(s, action, rng),
            (Self::Option(e), AnyState::Option(s)) => e.step(s, action, rng),
            (Self::Dataset(e), AnyState::Dataset(s)) => e.step(s, action, rng),
            _ => unreachable!("state from a different environment"),
        }
    }
}

/// Layer widths for a network from `input` to `output` with the configured
/// hidden layers, or the per-environment default.
pub fn layer_dims(env: &AnyEnv, hidden: Option<&[usize]>, output: usize) -> Vec<usize> {
    let d = env.state_dim();
    match hidden {
        Some(h) => std::iter::once(d).chain(h.iter().copied()).chain([output]).collect(),
        None => match env {
            AnyEnv::Dataset(_) => MlpPolicy::portfolio_dims(d, output),
            _ => MlpPolicy::square_dims(d, output),
        },
    }
}

pub fn init_policy(env: &AnyEnv, cfg: &ExperimentConfig) -> Result<MlpPolicy, CliError> {
    let dims = layer_dims(env, cfg.policy_hidden.as_deref(), env.action_count());
    let mut rng = RngStream::new(derive_seed(cfg.training.seed, INIT_DOMAIN), 0);
    MlpPolicy::glorot(&dims, &mut rng).map_err(|e| CliError::Config(format!("learner.policy.hidden: {e}")))
}

/// The two critics of the actor-critic learner, initialized on streams 1 and 2
/// of the policy's seed.
pub fn init_critics(env: &AnyEnv, cfg: &ExperimentConfig, hidden: Option<&[usize]>) -> Result<(ValueNet, ValueNet), CliError> {
    let dims = layer_dims(env, hidden.or(cfg.policy_hidden.as_deref()), 1);
    let seed = derive_seed(cfg.training.seed, INIT_DOMAIN);
    let make = |stream| {
        ValueNet::glorot(&dims, &mut RngStream::new(seed, stream))
            .map_err(|e| CliError::Config(format!("learner.equm_ac.critic_hidden: {e}")))
    };
    Ok((make(1)?, make(2)?))
}

/// Fails with an incompatibility error when `policy` does not fit `env`.
pub fn check_fits(env: &AnyEnv, policy: &MlpPolicy) -> Result<(), CliError> {
    equm::mdp::check_compatible(env, policy).map_err(|e| CliError::Incompatible(e.to_string()))?;
    Ok(())
}
