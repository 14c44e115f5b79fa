//! Why the gradient of `(E[R])^2` needs two independent trajectories.
//!
//! `grad (E[R])^2 = 2 E[R] grad E[R]` is a product of two expectations. The
//! single-trajectory plug-in `2 R * (R * score)` instead estimates
//! `2 grad E[R^2]`, so it is biased whenever `R` is random. The quadratic
//! utility never squares an expectation and has no such gap.

use crate::oracle::{enumerate_trajectories, exact_mean_and_gradients, FiniteEnvironment, OracleError};
use crate::policy::{GradVector, Policy};

use super::estimators::accumulate_score;
use super::UtilitySpec;

#[derive(Clone, Debug)]
pub struct DoubleSamplingReport {
    /// `2 E[R] grad E[R]`.
    pub exact: GradVector,
    /// Probability-weighted average of `2 R^2 score`.
    pub plug_in: GradVector,
    /// `plug_in - exact`.
    pub gap: GradVector,
    /// Largest absolute difference between the averaged utility estimator
    /// `u(R) score` and `alpha grad E[R] - beta/2 grad E[R^2]`.
    pub utility_gap: f64,
}

impl DoubleSamplingReport {
    pub fn gap_norm(&self) -> f64 {
        self.gap.norm()
    }
}

pub fn compare_double_sampling_demo<E, P>(
    env: &E,
    policy: &P,
    utility: &UtilitySpec,
    discount: f64,
) -> Result<DoubleSamplingReport, OracleError>
where
    E: FiniteEnvironment,
    P: Policy + ?Sized,
{
    let moments = exact_mean_and_gradients(env, policy, discount)?;
    let n = policy.num_params();
    let mut plug_in = GradVector::zeros(n);
    let mut utility_avg = GradVector::zeros(n);
    for wt in enumerate_trajectories(env, policy, discount)? {
        let r = wt.trajectory.cumulative_reward();
        accumulate_score(policy, &wt.trajectory, wt.probability * 2.0 * r * r, &mut plug_in)?;
        accumulate_score(policy, &wt.trajectory, wt.probability * utility.utility(r), &mut utility_avg)?;
    }
    let exact = moments.grad_mean.scaled(2.0 * moments.mean);
    let mut gap = plug_in.clone();
    gap.add_scaled(&exact, -1.0);
    let target = moments.utility_gradient(utility.alpha(), utility.beta());
    let utility_gap = utility_avg
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DoubleSamplingReport {
        exact,
        plug_in,
        gap,
        utility_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::TabularMdp;
    use crate::policy::TabularSoftmax;

    #[test]
    fn constant_return_has_no_gap() {
        let env = TabularMdp::constant(2.0, 3, 2);
        let policy = TabularSoftmax::zeros(3, 2);
        let u = UtilitySpec::new(1.0, 0.5).unwrap();
        let r = compare_double_sampling_demo(&env, &policy, &u, 1.0).unwrap();
        assert_eq!(r.gap_norm(), 0.0);
    }

    #[test]
    fn two_outcome_bandit_gap_is_exact() {
        let env = TabularMdp::bandit(&[0.0, 2.0]);
        let policy = TabularSoftmax::from_params(1, 2, vec![0.0, 0.4]).unwrap();
        let u = UtilitySpec::new(1.0, 0.5).unwrap();
        let r = compare_double_sampling_demo(&env, &policy, &u, 1.0).unwrap();
        // p = P(action 1); grad_z1 E[R] = 2 p (1 - p), grad E[R^2] = 4 p (1 - p)
        let p = 1.0 / (1.0 + (-0.4f64).exp());
        let d = p * (1.0 - p);
        let exact1 = 2.0 * (2.0 * p) * (2.0 * d);
        let plug1 = 2.0 * 4.0 * d;
        assert!((r.exact[1] - exact1).abs() < 1e-15);
        assert!((r.plug_in[1] - plug1).abs() < 1e-15);
        assert!((r.gap[1] - 8.0 * d * (1.0 - p)).abs() < 1e-15);
        assert!(r.gap_norm() > 0.1);
        assert!(r.utility_gap < 1e-15);
    }
}
