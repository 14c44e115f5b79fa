//! Single-trajectory score-function gradient estimators.
//!
//! Every estimator here is a scalar weight times the score sum
//! `sum_t grad log pi(A_t | S_t)` of one trajectory.

use crate::mdp::Trajectory;
use crate::policy::{GradVector, Policy, PolicyError};

use super::UtilitySpec;

/// Adds `scale * sum_t grad log pi(A_t | S_t)` into `out`.
pub fn accumulate_score<P: Policy + ?Sized>(
    policy: &P,
    traj: &Trajectory,
    scale: f64,
    out: &mut [f64],
) -> Result<(), PolicyError> {
    for step in traj.steps() {
        policy.accumulate_log_prob_grad(&step.state, step.action, scale, out)?;
    }
    Ok(())
}

pub fn score_sum<P: Policy + ?Sized>(policy: &P, traj: &Trajectory) -> Result<GradVector, PolicyError> {
    weighted_score(policy, traj, 1.0)
}

fn weighted_score<P: Policy + ?Sized>(policy: &P, traj: &Trajectory, weight: f64) -> Result<GradVector, PolicyError> {
    let mut g = GradVector::zeros(policy.num_params());
    accumulate_score(policy, traj, weight, &mut g)?;
    Ok(g)
}

/// Unbiased estimate of `grad E[R]`: `R * score`.
pub fn episode_gradient_reinforce<P: Policy + ?Sized>(policy: &P, traj: &Trajectory) -> Result<GradVector, PolicyError> {
    weighted_score(policy, traj, traj.cumulative_reward())
}

/// Unbiased estimate of `grad E[R^2]`: `R^2 * score`.
pub fn episode_gradient_second_moment<P: Policy + ?Sized>(
    policy: &P,
    traj: &Trajectory,
) -> Result<GradVector, PolicyError> {
    let r = traj.cumulative_reward();
    weighted_score(policy, traj, r * r)
}

/// Unbiased estimate of `grad E[u(R)]`: `u(R) * score`.
pub fn episode_gradient_equm<P: Policy + ?Sized>(
    policy: &P,
    traj: &Trajectory,
    utility: &UtilitySpec,
) -> Result<GradVector, PolicyError> {
    weighted_score(policy, traj, utility.utility(traj.cumulative_reward()))
}

/// Estimate of `grad (2 y E[R] - E[R^2])` at a fixed dual value `y`.
pub fn episode_gradient_dual<P: Policy + ?Sized>(policy: &P, traj: &Trajectory, y: f64) -> Result<GradVector, PolicyError> {
    let r = traj.cumulative_reward();
    weighted_score(policy, traj, 2.0 * y * r - r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionId, Transition};
    use crate::policy::TabularSoftmax;

    fn one_step(reward: f64) -> Trajectory {
        Trajectory::from_steps(
            vec![Transition {
                state: vec![1.0],
                action: ActionId(0),
                reward,
                next_is_terminal: true,
            }],
            1.0,
            false,
        )
    }

    #[test]
    fn zero_return_gives_zero_gradient() {
        let p = TabularSoftmax::zeros(1, 2);
        let g = episode_gradient_reinforce(&p, &one_step(0.0)).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_step_is_scaled_score() {
        let p = TabularSoftmax::from_params(1, 2, vec![0.3, -0.1]).unwrap();
        let traj = one_step(2.5);
        let g = episode_gradient_reinforce(&p, &traj).unwrap();
        let s = p.log_prob_grad(&[1.0], ActionId(0)).unwrap();
        for (a, b) in g.iter().zip(s.iter()) {
            assert_eq!(*a, 2.5 * b);
        }
    }

    #[test]
    fn risk_neutral_utility_matches_reinforce() {
        let p = TabularSoftmax::from_params(1, 2, vec![0.3, -0.1]).unwrap();
        let traj = one_step(1.7);
        let a = episode_gradient_reinforce(&p, &traj).unwrap();
        let b = episode_gradient_equm(&p, &traj, &UtilitySpec::risk_neutral()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn at_target_weight_is_peak_utility() {
        let p = TabularSoftmax::zeros(1, 2);
        let u = UtilitySpec::new(1.0, 0.25).unwrap();
        let g = episode_gradient_equm(&p, &one_step(4.0), &u).unwrap();
        let s = score_sum(&p, &one_step(4.0)).unwrap();
        assert_eq!(g, s.scaled(2.0));
    }
}
