//! Exact expectations by exhaustive trajectory enumeration.
//!
//! Only usable on small finite MDPs, where it serves as ground truth for the
//! sampled gradient estimators.

use thiserror::Error;

use crate::mdp::{ActionId, Environment, RolloutError, StateVec, Step, Trajectory, Transition};
use crate::policy::{GradVector, Policy, PolicyError};
use crate::rng::RngStream;

/// Longest horizon the enumerator accepts.
pub const MAX_ENUM_HORIZON: usize = 12;
/// Largest number of trajectories the enumerator will produce.
pub const MAX_ENUM_TRAJECTORIES: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("horizon cap {0} exceeds the enumeration limit of {MAX_ENUM_HORIZON}")]
    HorizonTooLong(usize),
    #[error("more than {MAX_ENUM_TRAJECTORIES} trajectories; enumeration is only for small instances")]
    BudgetExceeded,
    #[error("invalid tabular MDP: {0}")]
    InvalidMdp(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One branch of a transition kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<S> {
    pub prob: f64,
    pub next: S,
    pub reward: f64,
    pub terminal: bool,
}

/// Environment whose initial distribution and kernel can be listed.
pub trait FiniteEnvironment: Environment {
    fn initial_states(&self) -> Vec<(f64, Self::State)>;
    fn outcomes(&self, state: &Self::State, action: ActionId) -> Vec<Outcome<Self::State>>;
}

/// Explicit finite MDP over states `0..n`, observed as one-hot vectors.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon_cap: usize,
    initial: Vec<(usize, f64)>,
    table: Vec<Vec<Vec<Outcome<usize>>>>,
}

impl TabularMdp {
    /// Every `(state, action)` must be given a kernel; each kernel and the
    /// initial distribution must sum to one, with distinct branches.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon_cap: usize,
        initial: Vec<(usize, f64)>,
        table: Vec<Vec<Vec<Outcome<usize>>>>,
    ) -> Result<Self, OracleError> {
        let bad = |msg: String| Err(OracleError::InvalidMdp(msg));
        if n_states == 0 || n_actions == 0 || horizon_cap == 0 {
            return bad("sizes must be positive".into());
        }
        if table.len() != n_states || table.iter().any(|row| row.len() != n_actions) {
            return bad("table must be n_states x n_actions".into());
        }
        let total: f64 = initial.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 || initial.iter().any(|&(s, p)| s >= n_states || p < 0.0) {
            return bad("initial distribution must be a distribution over states".into());
        }
        for (s, row) in table.iter().enumerate() {
            for (a, kernel) in row.iter().enumerate() {
                let total: f64 = kernel.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("kernel ({s}, {a}) sums to {total}"));
                }
                for (i, o) in kernel.iter().enumerate() {
                    if o.next >= n_states || o.prob < 0.0 || !o.reward.is_finite() {
                        return bad(format!("kernel ({s}, {a}) branch {i} is malformed"));
                    }
                    if kernel[..i]
                        .iter()
                        .any(|p| p.next == o.next && p.reward == o.reward && p.terminal == o.terminal)
                    {
                        return bad(format!("kernel ({s}, {a}) has duplicate branches"));
                    }
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon_cap,
            initial,
            table,
        })
    }

    /// Single state, one step, action `i` pays `rewards[i]`.
    pub fn bandit(rewards: &[f64]) -> Self {
        let row = rewards
            .iter()
            .map(|&r| vec![det(0, r, true)])
            .collect();
        Self::new(1, rewards.len(), 1, vec![(0, 1.0)], vec![row]).expect("valid bandit")
    }

    /// Two steps, two actions. The first action pays `first[a]` and moves to
    /// state `1 + a`; the second action in state `1 + b` pays
    /// `leaves[2 * b + a]` and terminates. Four trajectories.
    pub fn binary_tree(first: [f64; 2], leaves: [f64; 4]) -> Self {
        let root = vec![vec![det(1, first[0], false)], vec![det(2, first[1], false)]];
        let mid = |b: usize| {
            vec![
                vec![det(0, leaves[2 * b], true)],
                vec![det(0, leaves[2 * b + 1], true)],
            ]
        };
        Self::new(3, 2, 2, vec![(0, 1.0)], vec![root, mid(0), mid(1)]).expect("valid tree")
    }

    /// `steps` transitions, each paying `reward` whatever the action.
    pub fn constant(reward: f64, steps: usize, n_actions: usize) -> Self {
        let table = (0..steps)
            .map(|s| {
                (0..n_actions)
                    .map(|_| vec![det((s + 1) % steps, reward, s + 1 == steps)])
                    .collect()
            })
            .collect();
        Self::new(steps, n_actions, steps, vec![(0, 1.0)], table).expect("valid chain")
    }

    pub fn with_initial(&self, initial: Vec<(usize, f64)>) -> Result<Self, OracleError> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.horizon_cap,
            initial,
            self.table.clone(),
        )
    }

    pub fn with_horizon_cap(&self, horizon_cap: usize) -> Result<Self, OracleError> {
        Self::new(
            self.n_states,
            self.n_actions,
            horizon_cap,
            self.initial.clone(),
            self.table.clone(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn one_hot(&self, state: usize) -> StateVec {
        let mut v = vec![0.0; self.n_states];
        v[state] = 1.0;
        v
    }
}

/// Deterministic branch.
pub fn det(next: usize, reward: f64, terminal: bool) -> Outcome<usize> {
    Outcome {
        prob: 1.0,
        next,
        reward,
        terminal,
    }
}

impl Environment for TabularMdp {
    type State = usize;

    fn action_count(&self) -> usize {
        self.n_actions
    }

    fn state_dim(&self) -> usize {
        self.n_states
    }

    fn horizon_cap(&self) -> usize {
        self.horizon_cap
    }

    fn reset(&self, rng: &mut RngStream) -> usize {
        let probs: Vec<f64> = self.initial.iter().map(|(_, p)| *p).collect();
        self.initial[rng.categorical(&probs)].0
    }

    fn observe(&self, state: &usize) -> StateVec {
        self.one_hot(*state)
    }

    fn step(&self, state: &mut usize, action: ActionId, rng: &mut RngStream) -> Step {
        let kernel = &self.table[*state][action.0];
        let probs: Vec<f64> = kernel.iter().map(|o| o.prob).collect();
        let o = &kernel[rng.categorical(&probs)];
        *state = o.next;
        Step {
            reward: o.reward,
            terminal: o.terminal,
        }
    }
}

impl FiniteEnvironment for TabularMdp {
    fn initial_states(&self) -> Vec<(f64, usize)> {
        self.initial.iter().map(|&(s, p)| (p, s)).collect()
    }

    fn outcomes(&self, state: &usize, action: ActionId) -> Vec<Outcome<usize>> {
        self.table[*state][action.0].clone()
    }
}

/// A trajectory with its exact probability under the policy.
#[derive(Clone, Debug)]
pub struct WeightedTrajectory {
    pub trajectory: Trajectory,
    pub probability: f64,
}

/// Lists every positive-probability trajectory exactly once.
///
/// Paths that reach the horizon cap without terminating are included and
/// flagged as truncated, so probabilities always sum to one.
pub fn enumerate_trajectories<E, P>(
    env: &E,
    policy: &P,
    discount: f64,
) -> Result<Vec<WeightedTrajectory>, OracleError>
where
    E: FiniteEnvironment,
    P: Policy + ?Sized,
{
    crate::mdp::check_discount(discount)?;
    crate::mdp::check_compatible(env, policy)?;
    if env.horizon_cap() > MAX_ENUM_HORIZON {
        return Err(OracleError::HorizonTooLong(env.horizon_cap()));
    }
    let mut count = 0usize;
    for (p0, s0) in env.initial_states() {
        if p0 > 0.0 {
            count_paths(env, policy, s0, 0, &mut count)?;
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut prefix = Vec::new();
    for (p0, s0) in env.initial_states() {
        if p0 > 0.0 {
            expand(env, policy, discount, s0, p0, &mut prefix, &mut out)?;
        }
    }
    Ok(out)
}

/// Counts leaves without materializing them, failing once over budget.
fn count_paths<E, P>(
    env: &E,
    policy: &P,
    state: E::State,
    depth: usize,
    count: &mut usize,
) -> Result<(), OracleError>
where
    E: FiniteEnvironment,
    P: Policy + ?Sized,
{
    if depth == env.horizon_cap() {
        *count += 1;
    } else {
        let probs = policy.action_probs(&env.observe(&state))?;
        for (a, &pa) in probs.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            for o in env.outcomes(&state, ActionId(a)) {
                if o.prob <= 0.0 {
                    continue;
                }
                if o.terminal {
                    *count += 1;
                } else {
                    count_paths(env, policy, o.next, depth + 1, count)?;
                }
            }
        }
    }
    if *count > MAX_ENUM_TRAJECTORIES {
        return Err(OracleError::BudgetExceeded);
    }
    Ok(())
}

fn expand<E, P>(
    env: &E,
    policy: &P,
    discount: f64,
    state: E::State,
    prob: f64,
    prefix: &mut Vec<Transition>,
    out: &mut Vec<WeightedTrajectory>,
) -> Result<(), OracleError>
where
    E: FiniteEnvironment,
    P: Policy + ?Sized,
{
    if prefix.len() == env.horizon_cap() {
        return emit(prefix, discount, true, prob, out);
    }
    let obs = env.observe(&state);
    let probs = policy.action_probs(&obs)?;
    for (a, &pa) in probs.iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        for o in env.outcomes(&state, ActionId(a)) {
            if o.prob <= 0.0 {
                continue;
            }
            prefix.push(Transition {
                state: obs.clone(),
                action: ActionId(a),
                reward: o.reward,
                next_is_terminal: o.terminal,
            });
            let p = prob * pa * o.prob;
            if o.terminal {
                emit(prefix, discount, false, p, out)?;
            } else {
                expand(env, policy, discount, o.next, p, prefix, out)?;
            }
            prefix.pop();
        }
    }
    Ok(())
}

fn emit(
    prefix: &[Transition],
    discount: f64,
    truncated: bool,
    probability: f64,
    out: &mut Vec<WeightedTrajectory>,
) -> Result<(), OracleError> {
    out.push(WeightedTrajectory {
        trajectory: Trajectory::from_steps(prefix.to_vec(), discount, truncated),
        probability,
    });
    Ok(())
}

/// Exact first and second moments of the cumulative reward and their
/// policy gradients.
#[derive(Clone, Debug)]
pub struct ExactMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub grad_mean: GradVector,
    pub grad_second: GradVector,
}

impl ExactMoments {
    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }

    /// `grad (alpha E[R] - beta/2 E[R^2])`
    pub fn utility_gradient(&self, alpha: f64, beta: f64) -> GradVector {
        let mut g = self.grad_mean.scaled(alpha);
        g.add_scaled(&self.grad_second, -0.5 * beta);
        g
    }
}

/// Sums over the enumerated trajectories: `E[R] = sum_k p_k R_k`,
/// `grad E[R] = sum_k p_k R_k sum_t grad log pi(S_t, A_t)`, and likewise for
/// `R^2`.
pub fn exact_mean_and_gradients<E, P>(
    env: &E,
    policy: &P,
    discount: f64,
) -> Result<ExactMoments, OracleError>
where
    E: FiniteEnvironment,
    P: Policy + ?Sized,
{
    let trajs = enumerate_trajectories(env, policy, discount)?;
    let n = policy.num_params();
    let mut m = ExactMoments {
        mean: 0.0,
        second_moment: 0.0,
        grad_mean: GradVector::zeros(n),
        grad_second: GradVector::zeros(n),
    };
    let mut score = vec![0.0; n];
    for wt in &trajs {
        let r = wt.trajectory.cumulative_reward();
        let p = wt.probability;
        m.mean += p * r;
        m.second_moment += p * r * r;
        score.iter_mut().for_each(|g| *g = 0.0);
        for step in wt.trajectory.steps() {
            policy.accumulate_log_prob_grad(&step.state, step.action, 1.0, &mut score)?;
        }
        m.grad_mean.add_scaled(&score, p * r);
        m.grad_second.add_scaled(&score, p * r * r);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TabularSoftmax;

    #[test]
    fn bandit_two_branches() {
        let env = TabularMdp::bandit(&[1.0, 0.0]);
        let policy = TabularSoftmax::zeros(1, 2);
        let trajs = enumerate_trajectories(&env, &policy, 1.0).unwrap();
        assert_eq!(trajs.len(), 2);
        assert!(trajs.iter().all(|t| t.probability == 0.5));
    }

    #[test]
    fn deterministic_policy_single_trajectory() {
        let env = TabularMdp::binary_tree([0.0, 0.0], [1.0, 2.0, 3.0, 4.0]);
        // logits so extreme that action 1 has probability exactly 0
        let mut policy = TabularSoftmax::zeros(3, 2);
        for s in 0..3 {
            policy.set_logit(s, 0, 800.0);
        }
        let trajs = enumerate_trajectories(&env, &policy, 1.0).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].probability, 1.0);
        assert_eq!(trajs[0].trajectory.cumulative_reward(), 1.0);
    }

    #[test]
    fn binary_tree_probabilities_are_products() {
        let env = TabularMdp::binary_tree([0.5, -0.5], [1.0, 2.0, 3.0, 4.0]);
        let policy = TabularSoftmax::from_params(3, 2, vec![0.3, -0.2, 1.1, 0.0, 0.4, -0.6]).unwrap();
        let trajs = enumerate_trajectories(&env, &policy, 1.0).unwrap();
        assert_eq!(trajs.len(), 4);
        let pi = |s: usize| policy.action_probs(&env.one_hot(s)).unwrap();
        for wt in &trajs {
            let steps = wt.trajectory.steps();
            let a0 = steps[0].action.0;
            let a1 = steps[1].action.0;
            let expected = pi(0)[a0] * pi(1 + a0)[a1];
            assert!((wt.probability - expected).abs() < 1e-15);
        }
        let total: f64 = trajs.iter().map(|t| t.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bandit_exact_gradient() {
        let env = TabularMdp::bandit(&[1.0, 0.0]);
        let policy = TabularSoftmax::zeros(1, 2);
        let m = exact_mean_and_gradients(&env, &policy, 1.0).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-15);
        // d/dz0 of sigma(z0 - z1) at 0 is 1/4
        assert!((m.grad_mean[0] - 0.25).abs() < 1e-15);
        assert!((m.grad_mean[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_reward_has_zero_gradient() {
        let env = TabularMdp::constant(2.0, 3, 2);
        let policy = TabularSoftmax::from_params(3, 2, vec![0.1, 0.7, -0.3, 0.2, 0.0, 1.0]).unwrap();
        let m = exact_mean_and_gradients(&env, &policy, 1.0).unwrap();
        assert!((m.mean - 6.0).abs() < 1e-12);
        assert!(m.grad_mean.iter().all(|g| g.abs() < 1e-12));
        assert!(m.grad_second.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let env = TabularMdp::binary_tree([0.5, -0.5], [1.0, 2.0, -3.0, 4.0]);
        let policy = TabularSoftmax::from_params(3, 2, vec![0.3, -0.2, 1.1, 0.0, 0.4, -0.6]).unwrap();
        let m = exact_mean_and_gradients(&env, &policy, 1.0).unwrap();
        let h = 1e-5;
        for i in 0..policy.num_params() {
            let moments = |delta: f64| {
                let mut p = policy.clone();
                p.params_mut()[i] += delta;
                let trajs = enumerate_trajectories(&env, &p, 1.0).unwrap();
                let mean: f64 = trajs.iter().map(|t| t.probability * t.trajectory.cumulative_reward()).sum();
                let sq: f64 = trajs
                    .iter()
                    .map(|t| t.probability * t.trajectory.cumulative_reward().powi(2))
                    .sum();
                (mean, sq)
            };
            let (mp, sp) = moments(h);
            let (mm, sm) = moments(-h);
            assert!((m.grad_mean[i] - (mp - mm) / (2.0 * h)).abs() < 1e-8);
            assert!((m.grad_second[i] - (sp - sm) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn truncated_paths_are_kept() {
        // self-loop that never terminates
        let env = TabularMdp::new(
            1,
            2,
            3,
            vec![(0, 1.0)],
            vec![vec![vec![det(0, 1.0, false)], vec![det(0, 0.0, false)]]],
        )
        .unwrap();
        let trajs = enumerate_trajectories(&env, &TabularSoftmax::zeros(1, 2), 1.0).unwrap();
        assert_eq!(trajs.len(), 8);
        assert!(trajs.iter().all(|t| t.trajectory.truncated()));
        let total: f64 = trajs.iter().map(|t| t.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limits() {
        let long = TabularMdp::constant(1.0, 13, 2);
        assert!(matches!(
            enumerate_trajectories(&long, &TabularSoftmax::zeros(13, 2), 1.0),
            Err(OracleError::HorizonTooLong(13))
        ));
        // 4^10 > 10^6 paths
        let wide = TabularMdp::constant(1.0, 10, 4);
        assert!(matches!(
            enumerate_trajectories(&wide, &TabularSoftmax::zeros(10, 4), 1.0),
            Err(OracleError::BudgetExceeded)
        ));
        assert!(TabularMdp::new(1, 1, 1, vec![(0, 0.5)], vec![vec![vec![det(0, 0.0, true)]]]).is_err());
    }
}
