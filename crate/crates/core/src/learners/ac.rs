//! Actor-critic for the quadratic-utility objective.
//!
//! Two critics estimate the first and second moments of the return from a
//! state. At each step the actor weight is the utility of the n-step
//! bootstrapped return estimate minus the utility implied by the critics at
//! the current state.

use crate::mdp::{check_compatible, Environment, Trajectory};
use crate::policy::{AdamConfig, AdamState, GradVector, Policy, PolicyError, ValueNet};

use super::train::{collect_batch, recent_tracker, LogRecorder, Objective, TrainOptions, TrainReport};
use super::{LearnerError, UtilitySpec};

/// A differentiable scalar function of the observation.
pub trait Critic: Send + Sync {
    fn value(&self, state: &[f64]) -> Result<f64, PolicyError>;
    /// Adds `scale * grad value(state)` into `out`.
    fn accumulate_grad(&self, state: &[f64], scale: f64, out: &mut [f64]) -> Result<(), PolicyError>;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
}

impl Critic for ValueNet {
    fn value(&self, state: &[f64]) -> Result<f64, PolicyError> {
        ValueNet::value(self, state)
    }

    fn accumulate_grad(&self, state: &[f64], scale: f64, out: &mut [f64]) -> Result<(), PolicyError> {
        ValueNet::accumulate_grad(self, state, scale, out)
    }

    fn params(&self) -> &[f64] {
        ValueNet::params(self)
    }

    fn params_mut(&mut self) -> &mut [f64] {
        ValueNet::params_mut(self)
    }
}

/// `value(x) = w . x`; with one-hot observations this is a lookup table.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCritic {
    pub weights: Vec<f64>,
}

impl LinearCritic {
    pub fn zeros(state_dim: usize) -> Self {
        Self {
            weights: vec![0.0; state_dim],
        }
    }
}

impl Critic for LinearCritic {
    fn value(&self, state: &[f64]) -> Result<f64, PolicyError> {
        if state.len() != self.weights.len() {
            return Err(PolicyError::StateDim {
                expected: self.weights.len(),
                got: state.len(),
            });
        }
        Ok(self.weights.iter().zip(state).map(|(w, x)| w * x).sum())
    }

    fn accumulate_grad(&self, state: &[f64], scale: f64, out: &mut [f64]) -> Result<(), PolicyError> {
        if state.len() != self.weights.len() {
            return Err(PolicyError::StateDim {
                expected: self.weights.len(),
                got: state.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(state) {
            *o += scale * x;
        }
        Ok(())
    }

    fn params(&self) -> &[f64] {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcConfig {
    /// Rewards summed before bootstrapping from the critics.
    pub n_step: usize,
    pub critic_adam: AdamConfig,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            n_step: 1,
            critic_adam: AdamConfig::default().with_weight_decay(0.0),
        }
    }
}

/// Per-step bootstrapped targets for the two critics.
#[derive(Clone, Debug, PartialEq)]
pub struct AcTargets {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Targets for every step `t` of `traj`, given the critic values
/// `first[t] = M1(S_t)` and `second[t] = M2(S_t)` at the recorded states.
///
/// With `G` the discounted sum of the next `n` rewards and `k = g^n`:
/// `target1 = G + k M1(S_{t+n})` and
/// `target2 = G^2 + 2 k G M1(S_{t+n}) + k^2 M2(S_{t+n})`.
/// Past the end of the episode both critics count as zero.
pub fn ac_targets(traj: &Trajectory, n_step: usize, first: &[f64], second: &[f64]) -> AcTargets {
    let steps = traj.steps();
    let tau = steps.len();
    let g = traj.discount();
    let mut out = AcTargets {
        first: Vec::with_capacity(tau),
        second: Vec::with_capacity(tau),
    };
    for t in 0..tau {
        let end = (t + n_step).min(tau);
        let mut partial = 0.0;
        let mut factor = 1.0;
        for step in &steps[t..end] {
            partial += factor * step.reward;
            factor *= g;
        }
        let (m1, m2) = if end < tau { (first[end], second[end]) } else { (0.0, 0.0) };
        out.first.push(partial + factor * m1);
        out.second.push(partial * partial + 2.0 * factor * partial * m1 + factor * factor * m2);
    }
    out
}

/// Gradients of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct AcGradients {
    /// Ascent direction for the actor.
    pub actor: GradVector,
    /// Gradient of `1/2 sum_t (M(S_t) - target_t)^2` for each critic.
    pub critic_first: GradVector,
    pub critic_second: GradVector,
    pub loss: f64,
}

pub fn ac_episode_gradient<P, C1, C2>(
    policy: &P,
    critic_first: &C1,
    critic_second: &C2,
    traj: &Trajectory,
    utility: &UtilitySpec,
    n_step: usize,
) -> Result<AcGradients, PolicyError>
where
    P: Policy + ?Sized,
    C1: Critic + ?Sized,
    C2: Critic + ?Sized,
{
    let steps = traj.steps();
    let m1: Vec<f64> = steps.iter().map(|s| critic_first.value(&s.state)).collect::<Result<_, _>>()?;
    let m2: Vec<f64> = steps.iter().map(|s| critic_second.value(&s.state)).collect::<Result<_, _>>()?;
    let targets = ac_targets(traj, n_step, &m1, &m2);
    let mut g = AcGradients {
        actor: GradVector::zeros(policy.num_params()),
        critic_first: GradVector::zeros(critic_first.params().len()),
        critic_second: GradVector::zeros(critic_second.params().len()),
        loss: 0.0,
    };
    for (t, step) in steps.iter().enumerate() {
        let (y1, y2) = (targets.first[t], targets.second[t]);
        let advantage = utility.expected(y1, y2) - utility.expected(m1[t], m2[t]);
        policy.accumulate_log_prob_grad(&step.state, step.action, advantage, &mut g.actor)?;
        critic_first.accumulate_grad(&step.state, m1[t] - y1, &mut g.critic_first)?;
        critic_second.accumulate_grad(&step.state, m2[t] - y2, &mut g.critic_second)?;
        g.loss += 0.5 * ((m1[t] - y1).powi(2) + (m2[t] - y2).powi(2));
    }
    Ok(g)
}

/// Trains the actor and both critics. Each update averages the episode
/// gradients of a batch; the critics descend their squared loss with their
/// own Adam states.
#[allow(clippy::too_many_arguments)]
pub fn train_equm_ac<E, P, C1, C2>(
    env: &E,
    policy: &mut P,
    critic_first: &mut C1,
    critic_second: &mut C2,
    utility: UtilitySpec,
    cfg: &AcConfig,
    opts: &TrainOptions,
) -> Result<TrainReport, LearnerError>
where
    E: Environment,
    P: Policy,
    C1: Critic,
    C2: Critic,
{
    opts.validate()?;
    check_compatible(env, policy)?;
    if cfg.n_step == 0 {
        return Err(LearnerError::Config("n_step must be at least 1".into()));
    }
    let objective = Objective::Equm(utility);
    let mut actor_opt = AdamState::new(opts.adam, policy.num_params());
    let mut c1_opt = AdamState::new(cfg.critic_adam, critic_first.params().len());
    let mut c2_opt = AdamState::new(cfg.critic_adam, critic_second.params().len());
    let mut recorder = LogRecorder::new();
    let recent_from = opts.episodes.saturating_sub(recent_tracker(opts.episodes));
    let mut recent = (0.0, 0usize);

    let mut done = 0;
    while done < opts.episodes {
        let n = opts.batch.min(opts.episodes - done);
        let trajs = collect_batch(env, &*policy, opts, done, n)?;
        let mut actor = GradVector::zeros(policy.num_params());
        let mut c1 = GradVector::zeros(critic_first.params().len());
        let mut c2 = GradVector::zeros(critic_second.params().len());
        let scale = 1.0 / n as f64;
        for (j, traj) in trajs.iter().enumerate() {
            let g = ac_episode_gradient(&*policy, &*critic_first, &*critic_second, traj, &utility, cfg.n_step)?;
            if !g.loss.is_finite() {
                return Err(LearnerError::CriticDiverged { episode: done + j + 1 });
            }
            actor.add_scaled(&g.actor, scale);
            c1.add_scaled(&g.critic_first, scale);
            c2.add_scaled(&g.critic_second, scale);
            if done + j >= recent_from {
                recent.0 += traj.cumulative_reward();
                recent.1 += 1;
            }
        }
        done += n;
        let optim = |source| LearnerError::Optim { episode: done, source };
        actor_opt.apply(policy.params_mut(), &actor, true).map_err(optim)?;
        c1_opt.apply(critic_first.params_mut(), &c1, false).map_err(optim)?;
        c2_opt.apply(critic_second.params_mut(), &c2, false).map_err(optim)?;
        if policy.params().iter().any(|p| !p.is_finite()) {
            return Err(LearnerError::NonFinite {
                episode: done,
                what: "policy parameter",
            });
        }
        if critic_first.params().iter().chain(critic_second.params()).any(|p| !p.is_finite()) {
            return Err(LearnerError::CriticDiverged { episode: done });
        }
        if opts.should_log(done) {
            recorder.record(env, &*policy, opts, &objective, done)?;
        }
    }
    Ok(TrainReport {
        log: recorder.finish(),
        updates: actor_opt.steps(),
        recent_train_mean: recent.0 / recent.1.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionId, Transition};
    use crate::oracle::TabularMdp;
    use crate::policy::TabularSoftmax;

    fn traj(rewards: &[f64], discount: f64) -> Trajectory {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| Transition {
                state: vec![i as f64],
                action: ActionId(0),
                reward: r,
                next_is_terminal: i + 1 == rewards.len(),
            })
            .collect();
        Trajectory::from_steps(steps, discount, false)
    }

    #[test]
    fn targets_without_critics_are_reward_to_go() {
        let t = traj(&[1.0, 2.0, 3.0], 1.0);
        let z = [0.0; 3];
        let out = ac_targets(&t, 5, &z, &z);
        assert_eq!(out.first, vec![6.0, 5.0, 3.0]);
        assert_eq!(out.second, vec![36.0, 25.0, 9.0]);
    }

    #[test]
    fn targets_bootstrap_with_cross_term() {
        let t = traj(&[1.0, 2.0, 3.0], 0.5);
        let m1 = [10.0, 20.0, 30.0];
        let m2 = [100.0, 400.0, 900.0];
        let out = ac_targets(&t, 1, &m1, &m2);
        // t = 0: G = 1, bootstrap from state 1
        assert_eq!(out.first[0], 1.0 + 0.5 * 20.0);
        assert_eq!(out.second[0], 1.0 + 2.0 * 0.5 * 1.0 * 20.0 + 0.25 * 400.0);
        // last step has no successor
        assert_eq!((out.first[2], out.second[2]), (3.0, 9.0));
        let two = ac_targets(&t, 2, &m1, &m2);
        let g = 1.0 + 0.5 * 2.0;
        assert_eq!(two.first[0], g + 0.25 * 30.0);
        assert_eq!(two.second[0], g * g + 2.0 * 0.25 * g * 30.0 + 0.0625 * 900.0);
    }

    #[test]
    fn perfect_critics_on_constant_chain_give_zero_advantage() {
        let env = TabularMdp::constant(1.5, 4, 2);
        let policy = TabularSoftmax::from_params(4, 2, vec![0.2, -0.4, 0.1, 0.9, -0.3, 0.0, 0.5, 0.3]).unwrap();
        let mut c1 = LinearCritic::zeros(4);
        let mut c2 = LinearCritic::zeros(4);
        for s in 0..4 {
            let rest = 1.5 * (4 - s) as f64;
            c1.weights[s] = rest;
            c2.weights[s] = rest * rest;
        }
        let u = UtilitySpec::new(1.0, 0.3).unwrap();
        let mut rng = crate::rng::RngStream::new(2, 0);
        for n in 1..=4 {
            let t = crate::mdp::rollout(&env, &policy, &mut rng, 1.0).unwrap();
            let g = ac_episode_gradient(&policy, &c1, &c2, &t, &u, n).unwrap();
            assert!(g.actor.iter().all(|x| x.abs() < 1e-12), "{:?}", g.actor);
            assert!(g.loss < 1e-20);
        }
    }

    #[test]
    fn rejects_zero_step() {
        let env = TabularMdp::bandit(&[1.0, 0.0]);
        let mut p = TabularSoftmax::zeros(1, 2);
        let cfg = AcConfig {
            n_step: 0,
            ..Default::default()
        };
        let err = train_equm_ac(
            &env,
            &mut p,
            &mut LinearCritic::zeros(1),
            &mut LinearCritic::zeros(1),
            UtilitySpec::risk_neutral(),
            &cfg,
            &TrainOptions::default(),
        );
        assert!(matches!(err, Err(LearnerError::Config(_))));
    }

    #[test]
    fn learns_bandit_preference() {
        let env = TabularMdp::bandit(&[0.0, 1.0]);
        let mut p = TabularSoftmax::zeros(1, 2);
        let opts = TrainOptions {
            episodes: 400,
            eval_every: 0,
            ..Default::default()
        };
        train_equm_ac(
            &env,
            &mut p,
            &mut LinearCritic::zeros(1),
            &mut LinearCritic::zeros(1),
            UtilitySpec::new(1.0, 0.2).unwrap(),
            &AcConfig::default(),
            &opts,
        )
        .unwrap();
        assert!(p.action_probs(&[1.0]).unwrap()[1] > 0.8);
    }
}
