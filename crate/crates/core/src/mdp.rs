//! Episodic MDP abstraction, trajectories and rollouts.

use thiserror::Error;

use crate::policy::{Policy, PolicyError};
use crate::rng::RngStream;

/// Observation handed to a policy. Fixed length per environment instance.
pub type StateVec = Vec<f64>;

/// Index of a discrete action, `0..action_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub action: ActionId,
    pub reward: f64,
    pub next_is_terminal: bool,
}

/// One episode. `stopping_time()` is the number of recorded steps.
///
/// A trajectory is `truncated` when the environment hit its horizon cap
/// without reaching a terminal state; learners treat such an episode as
/// terminal with zero continuation value.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    steps: Vec<Transition>,
    discount: f64,
    truncated: bool,
}

impl Trajectory {
    pub fn new(discount: f64) -> Self {
        Self {
            steps: Vec::new(),
            discount,
            truncated: false,
        }
    }

    pub fn from_steps(steps: Vec<Transition>, discount: f64, truncated: bool) -> Self {
        Self {
            steps,
            discount,
            truncated,
        }
    }

    pub fn push(&mut self, transition: Transition) {
        self.steps.push(transition);
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn stopping_time(&self) -> usize {
        self.steps.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    pub fn cumulative_reward(&self) -> f64 {
        cumulative_reward(self)
    }
}

/// Discounted cumulative reward `sum_t discount^(t-1) * r_t`.
pub fn cumulative_reward(traj: &Trajectory) -> f64 {
    discounted_sum(traj.rewards(), traj.discount)
}

/// Discounted sum of a reward sequence, first reward undiscounted.
pub fn discounted_sum(rewards: impl IntoIterator<Item = f64>, discount: f64) -> f64 {
    let mut total = 0.0;
    let mut factor = 1.0;
    for r in rewards {
        total += factor * r;
        factor *= discount;
    }
    total
}

/// Result of one environment transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic environment with a discrete action set.
///
/// The environment value itself is immutable configuration; per-episode
/// state lives in `Self::State` and is owned by the caller, so concurrent
/// rollouts only need distinct [`RngStream`]s.
pub trait Environment: Sync {
    type State: Clone + Send;

    fn action_count(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Hard bound on steps per episode.
    fn horizon_cap(&self) -> usize;

    fn reset(&self, rng: &mut RngStream) -> Self::State;
    fn observe(&self, state: &Self::State) -> StateVec;
    fn step(&self, state: &mut Self::State, action: ActionId, rng: &mut RngStream) -> Step;
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("policy has {policy} actions but environment has {env}")]
    ActionCountMismatch { env: usize, policy: usize },
    #[error("policy expects state dimension {policy} but environment produces {env}")]
    StateDimMismatch { env: usize, policy: usize },
    #[error("environment produced a non-finite reward at step {step}")]
    NonFiniteReward { step: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub fn check_discount(discount: f64) -> Result<(), RolloutError> {
    if discount > 0.0 && discount <= 1.0 {
        Ok(())
    } else {
        Err(RolloutError::InvalidDiscount(discount))
    }
}

pub fn check_compatible<E, P>(env: &E, policy: &P) -> Result<(), RolloutError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if env.action_count() != policy.action_count() {
        return Err(RolloutError::ActionCountMismatch {
            env: env.action_count(),
            policy: policy.action_count(),
        });
    }
    if env.state_dim() != policy.state_dim() {
        return Err(RolloutError::StateDimMismatch {
            env: env.state_dim(),
            policy: policy.state_dim(),
        });
    }
    Ok(())
}

/// Runs one episode, sampling every action from the policy.
///
/// Stops at a terminal transition or at `env.horizon_cap()` steps, in which
/// case the trajectory is flagged as truncated.
pub fn rollout<E, P>(
    env: &E,
    policy: &P,
    rng: &mut RngStream,
    discount: f64,
) -> Result<Trajectory, RolloutError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    check_discount(discount)?;
    check_compatible(env, policy)?;

    let mut state = env.reset(rng);
    let mut traj = Trajectory::new(discount);
    for t in 0..env.horizon_cap() {
        let obs = env.observe(&state);
        let probs = policy.action_probs(&obs)?;
        let action = ActionId(rng.categorical(&probs));
        let step = env.step(&mut state, action, rng);
        if !step.reward.is_finite() {
            return Err(RolloutError::NonFiniteReward { step: t });
        }
        traj.push(Transition {
            state: obs,
            action,
            reward: step.reward,
            next_is_terminal: step.terminal,
        });
        if step.terminal {
            return Ok(traj);
        }
    }
    traj.truncated = true;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TabularSoftmax;

    fn traj(rewards: &[f64], discount: f64) -> Trajectory {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| Transition {
                state: vec![0.0],
                action: ActionId(0),
                reward: r,
                next_is_terminal: i + 1 == rewards.len(),
            })
            .collect();
        Trajectory::from_steps(steps, discount, false)
    }

    #[test]
    fn cumulative_reward_examples() {
        assert_eq!(cumulative_reward(&traj(&[1.0, 1.0, 1.0], 1.0)), 3.0);
        assert_eq!(cumulative_reward(&traj(&[1.0, 1.0], 0.5)), 1.5);
        let r = cumulative_reward(&traj(&[2.0, -1.0, 4.0], 0.9));
        assert!((r - 4.34).abs() < 1e-12, "{r}");
    }

    /// One step, reward 1 whatever the action.
    struct OneStep;

    impl Environment for OneStep {
        type State = ();
        fn action_count(&self) -> usize {
            2
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn horizon_cap(&self) -> usize {
            10
        }
        fn reset(&self, _: &mut RngStream) {}
        fn observe(&self, _: &()) -> StateVec {
            vec![1.0]
        }
        fn step(&self, _: &mut (), _: ActionId, _: &mut RngStream) -> Step {
            Step {
                reward: 1.0,
                terminal: true,
            }
        }
    }

    /// Never terminates, zero reward.
    struct Endless;

    impl Environment for Endless {
        type State = ();
        fn action_count(&self) -> usize {
            2
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn horizon_cap(&self) -> usize {
            5
        }
        fn reset(&self, _: &mut RngStream) {}
        fn observe(&self, _: &()) -> StateVec {
            vec![1.0]
        }
        fn step(&self, _: &mut (), _: ActionId, _: &mut RngStream) -> Step {
            Step {
                reward: 0.0,
                terminal: false,
            }
        }
    }

    #[test]
    fn single_step_rollout() {
        let policy = TabularSoftmax::zeros(1, 2);
        let t = rollout(&OneStep, &policy, &mut RngStream::new(0, 0), 1.0).unwrap();
        assert_eq!(t.stopping_time(), 1);
        assert_eq!(t.cumulative_reward(), 1.0);
        assert!(!t.truncated());
    }

    #[test]
    fn horizon_cap_truncates() {
        let policy = TabularSoftmax::zeros(1, 2);
        let t = rollout(&Endless, &policy, &mut RngStream::new(0, 0), 1.0).unwrap();
        assert_eq!(t.stopping_time(), 5);
        assert!(t.truncated());
        assert_eq!(t.cumulative_reward(), 0.0);
    }

    #[test]
    fn rejects_bad_discount_and_mismatch() {
        let policy = TabularSoftmax::zeros(1, 2);
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            rollout(&OneStep, &policy, &mut rng, 0.0),
            Err(RolloutError::InvalidDiscount(_))
        ));
        let wrong = TabularSoftmax::zeros(1, 3);
        assert!(matches!(
            rollout(&OneStep, &wrong, &mut rng, 1.0),
            Err(RolloutError::ActionCountMismatch { .. })
        ));
    }
}
