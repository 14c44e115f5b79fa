use crate::mdp::ActionId;

use super::{check_action, log_softmax_grad, softmax, Policy, PolicyError};

/// Softmax over logits linear in the state features, `z = W x`, no bias.
///
/// On one-hot state encodings this is exactly a tabular softmax policy with
/// one logit per (state, action). Parameters are laid out action-major:
/// `params[a * state_dim + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularSoftmax {
    state_dim: usize,
    action_count: usize,
    params: Vec<f64>,
}

impl TabularSoftmax {
    pub fn zeros(state_dim: usize, action_count: usize) -> Self {
        Self {
            state_dim,
            action_count,
            params: vec![0.0; state_dim * action_count],
        }
    }

    pub fn from_params(
        state_dim: usize,
        action_count: usize,
        params: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        if params.len() != state_dim * action_count {
            return Err(PolicyError::ParamLength {
                expected: state_dim * action_count,
                got: params.len(),
            });
        }
        Ok(Self {
            state_dim,
            action_count,
            params,
        })
    }

    /// Logit of `action` in the state whose one-hot index is `state`.
    pub fn set_logit(&mut self, state: usize, action: usize, value: f64) {
        self.params[action * self.state_dim + state] = value;
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if state.len() != self.state_dim {
            return Err(PolicyError::StateDim {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        Ok(self
            .params
            .chunks(self.state_dim)
            .map(|row| row.iter().zip(state).map(|(w, x)| w * x).sum())
            .collect())
    }
}

impl Policy for TabularSoftmax {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>, PolicyError> {
        softmax(&self.logits(state)?)
    }

    fn accumulate_log_prob_grad(
        &self,
        state: &[f64],
        action: ActionId,
        scale: f64,
        out: &mut [f64],
    ) -> Result<(), PolicyError> {
        check_action(action, self.action_count)?;
        let probs = self.action_probs(state)?;
        let dlogits = log_softmax_grad(&probs, action);
        for (a, d) in dlogits.iter().enumerate() {
            let row = &mut out[a * self.state_dim..(a + 1) * self.state_dim];
            for (g, x) in row.iter_mut().zip(state) {
                *g += scale * d * x;
            }
        }
        Ok(())
    }
}
