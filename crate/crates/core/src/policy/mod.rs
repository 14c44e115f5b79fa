//! Stochastic softmax policies, their score functions, and the Adam optimizer.

mod adam;
mod checkpoint;
mod mlp;
mod tabular;

use std::ops::{Deref, DerefMut};

use thiserror::Error;

use crate::mdp::ActionId;
use crate::rng::RngStream;

pub use adam::{AdamConfig, AdamState, DecayMode, OptimError};
pub use checkpoint::{read_checkpoint, read_network, write_checkpoint, write_network, CheckpointError, CHECKPOINT_HEADER};
pub use mlp::{Mlp, MlpPolicy, ValueNet};
pub use tabular::TabularSoftmax;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("state has dimension {got}, expected {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("action {action} out of range for {count} actions")]
    ActionOutOfRange { action: usize, count: usize },
    #[error("non-finite activation in policy forward pass")]
    NonFinite,
    #[error("invalid layer dimensions {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },
}

/// Gradient with the same layout and length as a policy's parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl GradVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|g| g * factor).collect())
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &[f64], factor: f64) {
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += factor * b;
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GradVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GradVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A differentiable stochastic policy over a discrete action set.
pub trait Policy: Send + Sync {
    fn action_count(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Action distribution at `state`.
    fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>, PolicyError>;

    /// Adds `scale * grad log pi(action | state)` into `out`.
    fn accumulate_log_prob_grad(
        &self,
        state: &[f64],
        action: ActionId,
        scale: f64,
        out: &mut [f64],
    ) -> Result<(), PolicyError>;

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn log_prob_grad(&self, state: &[f64], action: ActionId) -> Result<GradVector, PolicyError> {
        let mut g = GradVector::zeros(self.num_params());
        self.accumulate_log_prob_grad(state, action, 1.0, &mut g)?;
        Ok(g)
    }

    fn log_prob(&self, state: &[f64], action: ActionId) -> Result<f64, PolicyError> {
        let probs = self.action_probs(state)?;
        check_action(action, probs.len())?;
        Ok(probs[action.0].ln())
    }

    fn sample(&self, state: &[f64], rng: &mut RngStream) -> Result<ActionId, PolicyError> {
        Ok(ActionId(rng.categorical(&self.action_probs(state)?)))
    }
}

pub(crate) fn check_action(action: ActionId, count: usize) -> Result<(), PolicyError> {
    if action.0 < count {
        Ok(())
    } else {
        Err(PolicyError::ActionOutOfRange {
            action: action.0,
            count,
        })
    }
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, PolicyError> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(PolicyError::NonFinite);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(PolicyError::NonFinite);
    }
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

/// Gradient of `log softmax(z)[action]` with respect to the logits `z`:
/// `onehot(action) - p`.
pub fn log_softmax_grad(probs: &[f64], action: ActionId) -> Vec<f64> {
    let mut g: Vec<f64> = probs.iter().map(|p| -p).collect();
    g[action.0] += 1.0;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[3.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1000.0, 999.0]).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 1..8),
            shift in -50.0f64..50.0,
        ) {
            let a = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let b = softmax(&shifted).unwrap();
            let total: f64 = a.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x > 0.0);
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
