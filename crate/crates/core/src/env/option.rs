//! American-style straddle (a call and a put bought together) on a
//! multiplicative binomial price path.
//!
//! Action 1 exercises and collects `max(0, K_put - x) + max(0, x - K_call)`;
//! action 0 waits while the price moves by `f_up` (probability `p_up`) or
//! `f_down`. At maturity the payoff is collected automatically.

use crate::mdp::{ActionId, Environment, StateVec, Step};
use crate::rng::RngStream;

use super::{ensure, ensure_prob, ConfigError};

#[derive(Clone, Debug, PartialEq)]
pub struct OptionEnvConfig {
    pub strike_call: f64,
    pub strike_put: f64,
    pub maturity: usize,
    pub x0: f64,
    pub p_up: f64,
    pub f_up: f64,
    pub f_down: f64,
}

impl Default for OptionEnvConfig {
    fn default() -> Self {
        Self {
            strike_call: 1.5,
            strike_put: 1.0,
            maturity: 20,
            x0: 1.0,
            p_up: 0.45,
            f_up: 9.0 / 8.0,
            f_down: 8.0 / 9.0,
        }
    }
}

impl OptionEnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure_prob("p_up", self.p_up)?;
        ensure(self.f_up > 1.0, || format!("f_up must exceed 1, got {}", self.f_up))?;
        ensure(self.f_down > 0.0 && self.f_down < 1.0, || {
            format!("f_down must lie in (0, 1), got {}", self.f_down)
        })?;
        ensure(self.maturity > 0, || "maturity must be positive".into())?;
        ensure(self.x0 > 0.0, || "x0 must be positive".into())
    }

    pub fn payoff(&self, x: f64) -> f64 {
        (self.strike_put - x).max(0.0) + (x - self.strike_call).max(0.0)
    }

    /// Largest payoff reachable on any path.
    pub fn max_payoff(&self) -> f64 {
        let x_max = self.x0 * self.f_up.powi(self.maturity as i32);
        self.strike_put.max(x_max - self.strike_call)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptionState {
    pub t: usize,
    pub x: f64,
}

#[derive(Clone, Debug)]
pub struct OptionEnv {
    cfg: OptionEnvConfig,
}

impl OptionEnv {
    pub const CONTINUE: ActionId = ActionId(0);
    pub const EXERCISE: ActionId = ActionId(1);

    pub fn new(cfg: OptionEnvConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &OptionEnvConfig {
        &self.cfg
    }
}

impl Environment for OptionEnv {
    type State = OptionState;

    fn action_count(&self) -> usize {
        2
    }

    /// `[x_t, t / maturity]`
    fn state_dim(&self) -> usize {
        2
    }

    fn horizon_cap(&self) -> usize {
        10 * self.cfg.maturity
    }

    fn reset(&self, _rng: &mut RngStream) -> OptionState {
        OptionState { t: 0, x: self.cfg.x0 }
    }

    fn observe(&self, s: &OptionState) -> StateVec {
        vec![s.x, s.t as f64 / self.cfg.maturity as f64]
    }

    fn step(&self, s: &mut OptionState, action: ActionId, rng: &mut RngStream) -> Step {
        if action == Self::EXERCISE {
            return Step {
                reward: self.cfg.payoff(s.x),
                terminal: true,
            };
        }
        s.x *= if rng.bernoulli(self.cfg.p_up) {
            self.cfg.f_up
        } else {
            self.cfg.f_down
        };
        s.t += 1;
        if s.t >= self.cfg.maturity {
            Step {
                reward: self.cfg.payoff(s.x),
                terminal: true,
            }
        } else {
            Step {
                reward: 0.0,
                terminal: false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> OptionEnv {
        OptionEnv::new(OptionEnvConfig::default()).unwrap()
    }

    #[test]
    fn payoff_examples() {
        let e = env();
        let mut rng = RngStream::new(0, 0);
        let mut s = OptionState { t: 3, x: 1.25 };
        assert_eq!(
            e.step(&mut s, OptionEnv::EXERCISE, &mut rng),
            Step { reward: 0.0, terminal: true }
        );
        let mut s = OptionState { t: 3, x: 0.8 };
        let step = e.step(&mut s, OptionEnv::EXERCISE, &mut rng);
        assert!((step.reward - 0.2).abs() < 1e-15 && step.terminal);
        assert!((e.config().payoff(2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn forced_exercise_at_maturity() {
        let e = env();
        let mut rng = RngStream::new(1, 0);
        let mut s = e.reset(&mut rng);
        let mut steps = 0;
        loop {
            steps += 1;
            let step = e.step(&mut s, OptionEnv::CONTINUE, &mut rng);
            if step.terminal {
                assert!((step.reward - e.config().payoff(s.x)).abs() < 1e-15);
                break;
            }
            assert_eq!(step.reward, 0.0);
        }
        assert_eq!(steps, 20);
    }

    #[test]
    fn reward_nonzero_at_most_once_and_bounded() {
        let e = env();
        let bound = e.config().max_payoff();
        for seed in 0..3000 {
            let mut rng = RngStream::new(seed, 0);
            let mut s = e.reset(&mut rng);
            let mut nonzero = 0;
            loop {
                let a = ActionId(rng.bernoulli(0.1) as usize);
                let step = e.step(&mut s, a, &mut rng);
                assert!(step.reward >= 0.0 && step.reward <= bound);
                nonzero += (step.reward != 0.0) as usize;
                if step.terminal {
                    break;
                }
            }
            assert!(nonzero <= 1);
        }
    }

    #[test]
    fn invalid() {
        assert!(OptionEnv::new(OptionEnvConfig { f_up: 0.9, ..Default::default() }).is_err());
        assert!(OptionEnv::new(OptionEnvConfig { f_down: 1.2, ..Default::default() }).is_err());
        assert!(OptionEnv::new(OptionEnvConfig { p_up: -0.1, ..Default::default() }).is_err());
    }
}
