//! Two-asset portfolio: a liquid asset with a fixed rate and a non-liquid
//! asset with a switching rate, a fixed lock-up, and default risk.
//!
//! Each period the agent either holds (action 0) or moves a fraction `w` of
//! its liquid capital into a new non-liquid position (action 1). Accounting
//! is on wealth: the per-period reward is the change in book wealth, so the
//! cumulative reward equals final wealth minus initial capital.
//!
//! Within a period, in order:
//! 1. every pending position draws a default with probability `p_risk`,
//!    then its remaining lock-up shrinks by one;
//! 2. positions reaching zero settle: principal times the rate returns to
//!    the liquid pool (reward `(rate - 1) * size`), or on default the
//!    principal is lost (reward `-size`);
//! 3. on invest, `w * liquid` leaves the pool into a position locked for
//!    `W` periods;
//! 4. the liquid pool earns `r_liquid - 1` on its balance;
//! 5. the non-liquid rate flips between low and high with `p_switch`.
//!
//! Defaults are hidden from the observation until settlement.

use crate::mdp::{ActionId, Environment, StateVec, Step};
use crate::rng::RngStream;

use super::{ensure, ensure_prob, ConfigError};

/// Which non-liquid rate a position earns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateLock {
    /// The rate in force when the position was opened.
    AtInvestment,
    /// The rate in force when the position settles.
    AtMaturity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioSynthConfig {
    /// Gross per-period rate of the liquid asset.
    pub r_liquid: f64,
    pub r_nl_low: f64,
    pub r_nl_high: f64,
    pub p_switch: f64,
    /// Per-period default hazard of each pending position.
    pub p_risk: f64,
    /// Lock-up of a non-liquid position, in periods.
    pub maturity_w: usize,
    pub fraction_w: f64,
    pub capital_m: f64,
    pub horizon_t: usize,
    pub rate_lock: RateLock,
}

impl Default for PortfolioSynthConfig {
    fn default() -> Self {
        Self {
            r_liquid: 1.001,
            r_nl_low: 1.1,
            r_nl_high: 2.0,
            p_switch: 0.1,
            p_risk: 0.05,
            maturity_w: 4,
            fraction_w: 0.2,
            capital_m: 1.0,
            horizon_t: 50,
            rate_lock: RateLock::AtInvestment,
        }
    }
}

impl PortfolioSynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure_prob("p_switch", self.p_switch)?;
        ensure_prob("p_risk", self.p_risk)?;
        ensure(self.r_nl_low < self.r_nl_high, || {
            format!("r_nl_low ({}) must be below r_nl_high ({})", self.r_nl_low, self.r_nl_high)
        })?;
        ensure(self.r_liquid > 0.0 && self.r_nl_low > 0.0, || "rates must be positive".into())?;
        ensure(self.maturity_w > 0, || "maturity_w must be positive".into())?;
        ensure(self.horizon_t > 0, || "horizon_t must be positive".into())?;
        ensure(self.fraction_w > 0.0 && self.fraction_w <= 1.0, || {
            format!("fraction_w must lie in (0, 1], got {}", self.fraction_w)
        })?;
        ensure(self.capital_m > 0.0, || "capital_m must be positive".into())
    }

    /// Cumulative reward of never investing: `M * (r_l^T - 1)`.
    pub fn always_hold_return(&self) -> f64 {
        self.capital_m * (self.r_liquid.powi(self.horizon_t as i32) - 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub size: f64,
    pub rate: f64,
    pub remaining: usize,
    pub defaulted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortfolioState {
    pub t: usize,
    pub liquid: f64,
    pub high_rate: bool,
    /// Open positions, oldest first.
    pub positions: Vec<Position>,
    pub invested_total: f64,
}

impl PortfolioState {
    /// Liquid capital plus the book value of open positions.
    pub fn wealth(&self) -> f64 {
        self.liquid + self.positions.iter().map(|p| p.size).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct PortfolioSynth {
    cfg: PortfolioSynthConfig,
}

impl PortfolioSynth {
    pub const HOLD: ActionId = ActionId(0);
    pub const INVEST: ActionId = ActionId(1);

    pub fn new(cfg: PortfolioSynthConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &PortfolioSynthConfig {
        &self.cfg
    }

    fn current_rate(&self, high: bool) -> f64 {
        if high {
            self.cfg.r_nl_high
        } else {
            self.cfg.r_nl_low
        }
    }

    /// Mark-to-market growth bound per period, `max(r_l, r_high^(1/W))`.
    pub fn max_growth_factor(&self) -> f64 {
        self.cfg
            .r_liquid
            .max(self.cfg.r_nl_high.powf(1.0 / self.cfg.maturity_w as f64))
    }
}

impl Environment for PortfolioSynth {
    type State = PortfolioState;

    fn action_count(&self) -> usize {
        2
    }

    /// `[t/T, liquid share, high-rate flag, W position shares by time to maturity]`
    fn state_dim(&self) -> usize {
        3 + self.cfg.maturity_w
    }

    fn horizon_cap(&self) -> usize {
        10 * self.cfg.horizon_t
    }

    fn reset(&self, rng: &mut RngStream) -> PortfolioState {
        PortfolioState {
            t: 0,
            liquid: self.cfg.capital_m,
            high_rate: rng.bernoulli(0.5),
            positions: Vec::with_capacity(self.cfg.maturity_w),
            invested_total: 0.0,
        }
    }

    fn observe(&self, s: &PortfolioState) -> StateVec {
        let w = self.cfg.maturity_w;
        let wealth = s.wealth();
        let norm = if wealth > 0.0 { wealth } else { 1.0 };
        let mut obs = vec![0.0; 3 + w];
        obs[0] = s.t as f64 / self.cfg.horizon_t as f64;
        obs[1] = s.liquid / norm;
        obs[2] = if s.high_rate { 1.0 } else { 0.0 };
        for p in &s.positions {
            obs[3 + p.remaining - 1] += p.size / norm;
        }
        obs
    }

    fn step(&self, s: &mut PortfolioState, action: ActionId, rng: &mut RngStream) -> Step {
        let cfg = &self.cfg;
        let mut reward = 0.0;

        for p in &mut s.positions {
            if !p.defaulted && rng.bernoulli(cfg.p_risk) {
                p.defaulted = true;
            }
            p.remaining -= 1;
        }
        let current = self.current_rate(s.high_rate);
        let mut still_open = Vec::with_capacity(cfg.maturity_w);
        for p in s.positions.drain(..) {
            if p.remaining > 0 {
                still_open.push(p);
                continue;
            }
            if p.defaulted {
                reward -= p.size;
            } else {
                let rate = match cfg.rate_lock {
                    RateLock::AtInvestment => p.rate,
                    RateLock::AtMaturity => current,
                };
                reward += (rate - 1.0) * p.size;
                s.liquid += rate * p.size;
            }
        }
        s.positions = still_open;

        if action == Self::INVEST {
            let size = cfg.fraction_w * s.liquid;
            s.liquid -= size;
            s.invested_total += size;
            s.positions.push(Position {
                size,
                rate: current,
                remaining: cfg.maturity_w,
                defaulted: false,
            });
        }

        let interest = (cfg.r_liquid - 1.0) * s.liquid;
        s.liquid += interest;
        reward += interest;

        if rng.bernoulli(cfg.p_switch) {
            s.high_rate = !s.high_rate;
        }
        s.t += 1;
        Step {
            reward,
            terminal: s.t >= cfg.horizon_t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::rollout;
    use crate::policy::{MlpPolicy, Policy, TabularSoftmax};

    fn run(env: &PortfolioSynth, rng: &mut RngStream, mut policy: impl FnMut(&PortfolioState) -> ActionId) -> (f64, PortfolioState) {
        let mut s = env.reset(rng);
        let mut total = 0.0;
        loop {
            let a = policy(&s);
            let step = env.step(&mut s, a, rng);
            total += step.reward;
            if step.terminal {
                return (total, s);
            }
        }
    }

    #[test]
    fn defaults() {
        let c = PortfolioSynthConfig::default();
        assert_eq!(
            (c.r_liquid, c.r_nl_low, c.r_nl_high, c.p_switch, c.p_risk),
            (1.001, 1.1, 2.0, 0.1, 0.05)
        );
        assert_eq!((c.maturity_w, c.fraction_w, c.capital_m, c.horizon_t), (4, 0.2, 1.0, 50));
    }

    #[test]
    fn always_hold_closed_form() {
        let env = PortfolioSynth::new(PortfolioSynthConfig::default()).unwrap();
        let closed = 1.001f64.powi(50) - 1.0;
        assert!((env.config().always_hold_return() - closed).abs() < 1e-14);
        for seed in 0..5 {
            let (r, s) = run(&env, &mut RngStream::new(seed, 0), |_| PortfolioSynth::HOLD);
            assert!((r - closed).abs() < 1e-12, "{r} vs {closed}");
            assert_eq!(s.t, 50);
        }
    }

    #[test]
    fn reward_telescopes_to_wealth() {
        let env = PortfolioSynth::new(PortfolioSynthConfig::default()).unwrap();
        let mut rng = RngStream::new(9, 0);
        let (r, s) = run(&env, &mut rng, |s| if s.high_rate { PortfolioSynth::INVEST } else { PortfolioSynth::HOLD });
        assert!((r - (s.wealth() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn certain_default_pays_nothing() {
        let cfg = PortfolioSynthConfig {
            p_risk: 1.0,
            ..Default::default()
        };
        let env = PortfolioSynth::new(cfg).unwrap();
        let hold = env.config().always_hold_return();
        for seed in 0..20 {
            let (r, _) = run(&env, &mut RngStream::new(seed, 0), |_| PortfolioSynth::INVEST);
            assert!(r < hold);
        }
        // every settled payout is a pure loss, identical across seeds
        let (a, _) = run(&env, &mut RngStream::new(1, 0), |_| PortfolioSynth::INVEST);
        let (b, _) = run(&env, &mut RngStream::new(2, 0), |_| PortfolioSynth::INVEST);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn analytic_bounds_hold() {
        let env = PortfolioSynth::new(PortfolioSynthConfig::default()).unwrap();
        let c = env.config();
        let growth = c.r_liquid.powi(c.horizon_t as i32);
        let upper = c.capital_m * (env.max_growth_factor().powi(c.horizon_t as i32) - 1.0);
        for seed in 0..2000 {
            let mut rng = RngStream::new(seed, 0);
            let mut coin = RngStream::new(seed, 1);
            let (r, s) = run(&env, &mut rng, |_| ActionId(coin.index(2)));
            let lower = c.always_hold_return() - growth * s.invested_total;
            assert!(r >= lower - 1e-12 && r <= upper, "seed {seed}: {r}");
        }
    }

    #[test]
    fn rate_chain_is_symmetric() {
        let env = PortfolioSynth::new(PortfolioSynthConfig::default()).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut s = env.reset(&mut rng);
        let n = 1_000_000;
        let mut high = 0usize;
        for _ in 0..n {
            high += s.high_rate as usize;
            env.step(&mut s, PortfolioSynth::HOLD, &mut rng);
            s.t = 0;
        }
        let frac = high as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn observation_layout() {
        let env = PortfolioSynth::new(PortfolioSynthConfig::default()).unwrap();
        let mut rng = RngStream::new(0, 0);
        let mut s = env.reset(&mut rng);
        s.high_rate = true;
        env.step(&mut s, PortfolioSynth::INVEST, &mut rng);
        let obs = env.observe(&s);
        assert_eq!(obs.len(), 7);
        assert!((obs[0] - 1.0 / 50.0).abs() < 1e-15);
        assert!((obs[1] + obs[6] - 1.0).abs() < 1e-12);
        assert!((obs[6] - 0.2 / 1.0).abs() < 1e-3);
    }

    #[test]
    fn rate_lock_modes_differ() {
        let lock = PortfolioSynth::new(PortfolioSynthConfig {
            p_switch: 1.0,
            p_risk: 0.0,
            maturity_w: 1,
            horizon_t: 2,
            ..Default::default()
        })
        .unwrap();
        let floating = PortfolioSynth::new(PortfolioSynthConfig {
            rate_lock: RateLock::AtMaturity,
            ..lock.config().clone()
        })
        .unwrap();
        let mut a = RngStream::new(4, 0);
        let mut b = RngStream::new(4, 0);
        let (ra, _) = run(&lock, &mut a, |s| if s.t == 0 { PortfolioSynth::INVEST } else { PortfolioSynth::HOLD });
        let (rb, _) = run(&floating, &mut b, |s| if s.t == 0 { PortfolioSynth::INVEST } else { PortfolioSynth::HOLD });
        assert!((ra - rb).abs() > 0.1);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            PortfolioSynthConfig { p_risk: 1.5, ..Default::default() },
            PortfolioSynthConfig { r_nl_low: 3.0, ..Default::default() },
            PortfolioSynthConfig { fraction_w: 0.0, ..Default::default() },
            PortfolioSynthConfig { maturity_w: 0, ..Default::default() },
        ] {
            assert!(PortfolioSynth::new(cfg).is_err());
        }
    }

    #[test]
    fn seeded_rollout_is_bit_identical() {
        let env = PortfolioSynth::new(PortfolioSynthConfig::default()).unwrap();
        let policy = MlpPolicy::glorot(&MlpPolicy::square_dims(7, 2), &mut RngStream::new(1, 0)).unwrap();
        let a = rollout(&env, &policy, &mut RngStream::new(5, 17), 1.0).unwrap();
        let b = rollout(&env, &policy, &mut RngStream::new(5, 17), 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stopping_time(), 50);
        assert_eq!(a.cumulative_reward().to_bits(), b.cumulative_reward().to_bits());
        assert_eq!(TabularSoftmax::zeros(7, 2).action_count(), env.action_count());
    }
}
