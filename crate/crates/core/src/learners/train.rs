use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::mdp::{check_compatible, check_discount, rollout, Environment, Trajectory};
use crate::metrics::{mean, sample_returns, variance, VarianceKind};
use crate::policy::{AdamConfig, AdamState, Policy};
use crate::rng::{derive_seed, RngStream};

use super::estimators::accumulate_score;
use super::{LearnerError, UtilitySpec};

/// Seed domain of the evaluation rollouts recorded in the training log.
pub const EVAL_SEED_DOMAIN: u64 = 0x6576_616c;

pub const LOG_HEADER: &str = "episode,eval_cr,eval_var,objective_estimate,wallclock_ms";

/// How the variance penalty reacts to the gap `x = Var - target`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    /// `g(x) = max(0, x)`: only an excess over the target is penalized.
    LinearOneSided,
    /// `g(x) = |x|`: the variance is pulled towards the target from both sides.
    LinearEquality,
    /// `g(x) = max(0, x)^2`.
    Quadratic,
}

impl Penalty {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Self::LinearOneSided => x.max(0.0),
            Self::LinearEquality => x.abs(),
            Self::Quadratic => x.max(0.0).powi(2),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::LinearOneSided => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LinearEquality => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::Quadratic => 2.0 * x.max(0.0),
        }
    }
}

/// Variance-penalized learner: ascends `E[R] - penalty_weight * g(Var - variance_target)`
/// with the moments replaced by fast exponential averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TamarConfig {
    pub penalty_weight: f64,
    pub variance_target: f64,
    pub penalty: Penalty,
    pub tracker_rate: f64,
}

impl TamarConfig {
    pub fn new(variance_target: f64) -> Self {
        Self {
            penalty_weight: 1.0,
            variance_target,
            penalty: Penalty::LinearOneSided,
            tracker_rate: 0.1,
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(LearnerError::Config(format!(
                "penalty weight must be non-negative, got {}",
                self.penalty_weight
            )));
        }
        if !(self.variance_target >= 0.0) {
            return Err(LearnerError::Config(format!(
                "variance target must be non-negative, got {}",
                self.variance_target
            )));
        }
        check_rate(self.tracker_rate)
    }

    /// Per-episode weight on the score sum given the tracked mean `m` and
    /// second moment `q` from before the episode.
    pub fn weight(&self, r: f64, m: f64, q: f64) -> f64 {
        let slope = self.penalty.derivative(q - m * m - self.variance_target);
        r - self.penalty_weight * slope * (r * r - 2.0 * m * r)
    }
}

/// Dual mean-variance learner: alternates `y = tracked mean + 1/(2 lambda)`
/// with ascent on `2 y E[R] - E[R^2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XieConfig {
    pub lambda: f64,
    pub tracker_rate: f64,
}

impl XieConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tracker_rate: 0.1,
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(LearnerError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        check_rate(self.tracker_rate)
    }

    /// Closed-form maximizer of the dual objective in `y`.
    pub fn dual_value(&self, tracked_mean: f64) -> f64 {
        tracked_mean + 1.0 / (2.0 * self.lambda)
    }
}

fn check_rate(rate: f64) -> Result<(), LearnerError> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(LearnerError::Config(format!("tracker rate must lie in (0, 1], got {rate}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    Reinforce,
    Equm(UtilitySpec),
    Tamar(TamarConfig),
    Xie(XieConfig),
}

impl Objective {
    pub fn validate(&self) -> Result<(), LearnerError> {
        match self {
            Self::Reinforce | Self::Equm(_) => Ok(()),
            Self::Tamar(c) => c.validate(),
            Self::Xie(c) => c.validate(),
        }
    }

    /// Value of the objective at an evaluated mean and variance.
    pub fn estimate(&self, cr: f64, var: f64) -> f64 {
        match self {
            Self::Reinforce => cr,
            Self::Equm(u) => u.expected(cr, var + cr * cr),
            Self::Tamar(c) => cr - c.penalty_weight * c.penalty.value(var - c.variance_target),
            Self::Xie(c) => cr - c.lambda * var,
        }
    }

    fn tracker_rate(&self) -> Option<f64> {
        match self {
            Self::Tamar(c) => Some(c.tracker_rate),
            Self::Xie(c) => Some(c.tracker_rate),
            _ => None,
        }
    }
}

/// Exponential averages of `R` and `R^2`, seeded by the first sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Moments {
    mean: f64,
    second: f64,
    seen: bool,
}

impl Moments {
    fn update(&mut self, r: f64, rate: f64) {
        if self.seen {
            self.mean += rate * (r - self.mean);
            self.second += rate * (r * r - self.second);
        } else {
            self.mean = r;
            self.second = r * r;
            self.seen = true;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub episodes: usize,
    /// Episodes averaged per parameter update.
    pub batch: usize,
    pub seed: u64,
    /// Evaluate every this many episodes; 0 disables the log.
    pub eval_every: usize,
    pub eval_trials: usize,
    pub discount: f64,
    /// Subtract the running mean of past episode weights.
    pub baseline: bool,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            batch: 1,
            seed: 0,
            eval_every: 200,
            eval_trials: 100,
            discount: 1.0,
            baseline: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.batch == 0 {
            return Err(LearnerError::Config("batch must be at least 1".into()));
        }
        if self.eval_every > 0 && self.eval_trials < 2 {
            return Err(LearnerError::Config("eval_trials must be at least 2".into()));
        }
        check_discount(self.discount)?;
        Ok(())
    }

    pub(crate) fn eval_seed(&self) -> u64 {
        derive_seed(self.seed, EVAL_SEED_DOMAIN)
    }

    pub(crate) fn should_log(&self, done: usize) -> bool {
        self.eval_every > 0 && (done % self.eval_every == 0 || done == self.episodes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub episode: usize,
    pub eval_cr: f64,
    pub eval_var: f64,
    pub objective_estimate: f64,
    pub wallclock_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.episode, r.eval_cr, r.eval_var, r.objective_estimate, r.wallclock_ms
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err("missing training log header".into());
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("line {}: expected 5 fields", i + 2));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("line {}: bad number {s:?}", i + 2));
            rows.push(LogRow {
                episode: f[0].parse().map_err(|_| format!("line {}: bad episode", i + 2))?,
                eval_cr: num(f[1])?,
                eval_var: num(f[2])?,
                objective_estimate: num(f[3])?,
                wallclock_ms: f[4].parse().map_err(|_| format!("line {}: bad wallclock", i + 2))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: TrainingLog,
    pub updates: u64,
    /// Mean of the training-episode returns over the last 10% of episodes.
    pub recent_train_mean: f64,
}

pub(crate) struct LogRecorder {
    start: Instant,
    log: TrainingLog,
}

impl LogRecorder {
    pub(crate) fn new() -> Self {
        Self {
            start: Instant::now(),
            log: TrainingLog::default(),
        }
    }

    pub(crate) fn record<E: Environment, P: Policy>(
        &mut self,
        env: &E,
        policy: &P,
        opts: &TrainOptions,
        objective: &Objective,
        done: usize,
    ) -> Result<(), LearnerError> {
        let returns = sample_returns(env, policy, opts.eval_trials, opts.eval_seed(), opts.discount)?;
        let cr = mean(&returns);
        let var = variance(&returns, VarianceKind::Population);
        self.log.rows.push(LogRow {
            episode: done,
            eval_cr: cr,
            eval_var: var,
            objective_estimate: objective.estimate(cr, var),
            wallclock_ms: self.start.elapsed().as_millis() as u64,
        });
        Ok(())
    }

    pub(crate) fn finish(self) -> TrainingLog {
        self.log
    }
}

/// Rollouts for episodes `first..first + n`, episode `k` on stream `(seed, k)`.
pub(crate) fn collect_batch<E: Environment, P: Policy>(
    env: &E,
    policy: &P,
    opts: &TrainOptions,
    first: usize,
    n: usize,
) -> Result<Vec<Trajectory>, LearnerError> {
    let run = |k: usize| rollout(env, policy, &mut RngStream::new(opts.seed, k as u64), opts.discount);
    let trajs: Result<Vec<_>, _> = if n == 1 {
        vec![run(first)].into_iter().collect()
    } else {
        (first..first + n).into_par_iter().map(run).collect()
    };
    Ok(trajs?)
}

pub(crate) fn recent_tracker(episodes: usize) -> usize {
    (episodes / 10).max(1)
}

/// Score-function training shared by all episodic objectives: each update
/// ascends the batch average of `weight(R) * score` with Adam.
pub fn train_policy_gradient<E, P>(
    env: &E,
    policy: &mut P,
    objective: &Objective,
    opts: &TrainOptions,
) -> Result<TrainReport, LearnerError>
where
    E: Environment,
    P: Policy,
{
    opts.validate()?;
    objective.validate()?;
    check_compatible(env, policy)?;

    let mut adam = AdamState::new(opts.adam, policy.num_params());
    let mut grad = vec![0.0; policy.num_params()];
    let mut moments = Moments::default();
    let mut baseline = (0.0, 0usize);
    let mut recorder = LogRecorder::new();
    let recent_from = opts.episodes.saturating_sub(recent_tracker(opts.episodes));
    let mut recent = (0.0, 0usize);

    let mut done = 0;
    while done < opts.episodes {
        let n = opts.batch.min(opts.episodes - done);
        let trajs = collect_batch(env, &*policy, opts, done, n)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        // trackers are read before the batch and updated after each episode
        let before = moments;
        for (j, traj) in trajs.iter().enumerate() {
            let r = traj.cumulative_reward();
            let mut w = match objective {
                Objective::Reinforce => r,
                Objective::Equm(u) => u.utility(r),
                Objective::Tamar(c) => c.weight(r, before.mean, before.second),
                Objective::Xie(c) => {
                    let y = c.dual_value(before.mean);
                    2.0 * y * r - r * r
                }
            };
            if opts.baseline {
                let b = if baseline.1 == 0 { 0.0 } else { baseline.0 / baseline.1 as f64 };
                baseline.0 += w;
                baseline.1 += 1;
                w -= b;
            }
            if !w.is_finite() {
                return Err(LearnerError::NonFinite {
                    episode: done + j + 1,
                    what: "episode weight",
                });
            }
            accumulate_score(&*policy, traj, w / n as f64, &mut grad)?;
            if let Some(rate) = objective.tracker_rate() {
                moments.update(r, rate);
                if !(moments.mean.is_finite() && moments.second.is_finite()) {
                    return Err(LearnerError::TrackerDiverged {
                        episode: done + j + 1,
                        mean: moments.mean,
                        second: moments.second,
                    });
                }
            }
            if done + j >= recent_from {
                recent.0 += r;
                recent.1 += 1;
            }
        }
        done += n;
        adam.apply(policy.params_mut(), &grad, true)
            .map_err(|source| LearnerError::Optim { episode: done, source })?;
        if policy.params().iter().any(|p| !p.is_finite()) {
            return Err(LearnerError::NonFinite {
                episode: done,
                what: "policy parameter",
            });
        }
        if opts.should_log(done) {
            recorder.record(env, &*policy, opts, objective, done)?;
        }
    }
    Ok(TrainReport {
        log: recorder.finish(),
        updates: adam.steps(),
        recent_train_mean: recent.0 / recent.1.max(1) as f64,
    })
}

pub fn train_reinforce<E: Environment, P: Policy>(
    env: &E,
    policy: &mut P,
    opts: &TrainOptions,
) -> Result<TrainReport, LearnerError> {
    train_policy_gradient(env, policy, &Objective::Reinforce, opts)
}

pub fn train_equm_pg<E: Environment, P: Policy>(
    env: &E,
    policy: &mut P,
    utility: UtilitySpec,
    opts: &TrainOptions,
) -> Result<TrainReport, LearnerError> {
    train_policy_gradient(env, policy, &Objective::Equm(utility), opts)
}

pub fn train_tamar<E: Environment, P: Policy>(
    env: &E,
    policy: &mut P,
    cfg: TamarConfig,
    opts: &TrainOptions,
) -> Result<TrainReport, LearnerError> {
    train_policy_gradient(env, policy, &Objective::Tamar(cfg), opts)
}

pub fn train_xie<E: Environment, P: Policy>(
    env: &E,
    policy: &mut P,
    cfg: XieConfig,
    opts: &TrainOptions,
) -> Result<TrainReport, LearnerError> {
    train_policy_gradient(env, policy, &Objective::Xie(cfg), opts)
}
