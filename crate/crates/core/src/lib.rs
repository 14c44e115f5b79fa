//! Policy-gradient training of agents that maximize expected quadratic
//! utility, alongside constrained mean-variance baselines, on synthetic and
//! dataset-driven decision problems.

pub mod env;
pub mod learners;
pub mod mdp;
pub mod metrics;
pub mod oracle;
pub mod policy;
pub mod rng;

pub use mdp::{rollout, ActionId, Environment, Step, Trajectory, Transition};
pub use policy::{GradVector, Policy};
pub use rng::RngStream;

/// The guide's chapters, compiled as doc-tests so their snippets keep
/// working.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/utility.md")]
    mod utility {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
