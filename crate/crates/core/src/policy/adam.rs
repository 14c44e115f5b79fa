use thiserror::Error;

/// How the weight-decay term enters the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayMode {
    /// `theta *= 1 - lr * weight_decay` before the Adam increment.
    Decoupled,
    /// `weight_decay * theta` added to the (descent-direction) gradient.
    CoupledL2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.1,
            decay_mode: DecayMode::Decoupled,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("gradient has length {got}, parameters have length {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite gradient entry at index {index}; step rejected")]
    NonFinite { index: usize },
}

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One optimizer step. With `ascent` the parameters move along `grad`,
    /// otherwise against it. A gradient containing NaN or infinity leaves
    /// both the parameters and the moments untouched.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], ascent: bool) -> Result<(), OptimError> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(OptimError::Length {
                expected: params.len(),
                got: grad.len(),
            });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFinite { index });
        }
        let c = self.config;
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let sign = if ascent { -1.0 } else { 1.0 };

        if c.decay_mode == DecayMode::Decoupled && c.weight_decay != 0.0 {
            let shrink = 1.0 - c.learning_rate * c.weight_decay;
            for p in params.iter_mut() {
                *p *= shrink;
            }
        }
        for i in 0..params.len() {
            // work in descent coordinates
            let mut g = sign * grad[i];
            if c.decay_mode == DecayMode::CoupledL2 {
                g += c.weight_decay * params[i];
            }
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let cfg = AdamConfig::default().with_weight_decay(0.0);
        let mut state = AdamState::new(cfg, 3);
        let mut theta = vec![1.0, -2.0, 0.5];
        state.apply(&mut theta, &[0.0; 3], true).unwrap();
        assert_eq!(theta, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig::default().with_weight_decay(0.0);
        let g = [0.3, -2.0, 1e-3];
        for ascent in [true, false] {
            let mut state = AdamState::new(cfg, 3);
            let mut theta = vec![0.0; 3];
            state.apply(&mut theta, &g, ascent).unwrap();
            let sign = if ascent { 1.0 } else { -1.0 };
            for (t, gi) in theta.iter().zip(g) {
                let expected = sign * 0.01 * gi / (gi.abs() + 1e-8);
                assert!((t - expected).abs() < 1e-15, "{t} vs {expected}");
            }
        }
    }

    #[test]
    fn decay_only_step() {
        let mut state = AdamState::new(AdamConfig::default(), 2);
        let mut theta = vec![2.0, -4.0];
        state.apply(&mut theta, &[0.0, 0.0], true).unwrap();
        assert!((theta[0] - 2.0 * 0.999).abs() < 1e-15);
        assert!((theta[1] + 4.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn coupled_decay_pulls_toward_zero() {
        let cfg = AdamConfig {
            decay_mode: DecayMode::CoupledL2,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(cfg, 1);
        let mut theta = vec![1.0];
        state.apply(&mut theta, &[0.0], true).unwrap();
        assert!(theta[0] < 1.0);
    }

    #[test]
    fn rejects_non_finite() {
        let mut state = AdamState::new(AdamConfig::default(), 2);
        let mut theta = vec![1.0, 1.0];
        let err = state.apply(&mut theta, &[0.1, f64::NAN], true).unwrap_err();
        assert_eq!(err, OptimError::NonFinite { index: 1 });
        assert_eq!(theta, vec![1.0, 1.0]);
        assert_eq!(state.steps(), 0);
        assert!(state.apply(&mut theta, &[0.1], true).is_err());
    }
}
