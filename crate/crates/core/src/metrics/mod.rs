//! Evaluation statistics and mean-variance frontier extraction.

mod pareto;
mod report;

use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{rollout, Environment, RolloutError};
use crate::policy::Policy;
use crate::rng::RngStream;

pub use pareto::{pareto_filter, FrontierPoint};
pub use report::{read_report_csv, write_report_csv, EvalReport, REPORT_HEADER};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("period return {value} at index {index} is at or below -100%")]
    Domain { index: usize, value: f64 },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("malformed report csv: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceKind {
    /// Divisor `n`.
    Population,
    /// Divisor `n - 1`.
    Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub discount: f64,
    /// Factor in `rr = annualization * cr / sqrt(var)`; `sqrt(12)` for
    /// monthly data, 1 for raw episodic returns.
    pub annualization: f64,
    pub zeta: Option<f64>,
    pub variance: VarianceKind,
    pub keep_returns: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            discount: 1.0,
            annualization: 12f64.sqrt(),
            zeta: None,
            variance: VarianceKind::Population,
            keep_returns: false,
        }
    }
}

impl EvalOptions {
    pub fn episodic() -> Self {
        Self {
            annualization: 1.0,
            ..Self::default()
        }
    }

    pub fn with_zeta(mut self, zeta: Option<f64>) -> Self {
        self.zeta = zeta;
        self
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64], kind: VarianceKind) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    match kind {
        VarianceKind::Population => ss / xs.len() as f64,
        VarianceKind::Sample => ss / (xs.len() - 1) as f64,
    }
}

/// Mean squared distance of the samples from a target return `zeta`.
pub fn mse_to_target(returns: &[f64], zeta: f64) -> f64 {
    returns.iter().map(|r| (zeta - r) * (zeta - r)).sum::<f64>() / returns.len() as f64
}

/// Worst peak-to-trough drop of cumulative wealth, as a value in `[-1, 0]`.
///
/// Wealth is `W_t = prod_{s <= t} (1 + y_s)` and the drawdown at `t` is
/// `W_t / max_{s <= t} W_s - 1`; the running peak starts at `W_1`.
pub fn max_drawdown(returns: &[f64]) -> Result<f64, MetricsError> {
    let mut wealth = 1.0;
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for (index, &y) in returns.iter().enumerate() {
        if !(y > -1.0) {
            return Err(MetricsError::Domain { index, value: y });
        }
        wealth *= 1.0 + y;
        peak = peak.max(wealth);
        worst = worst.min(wealth / peak - 1.0);
    }
    Ok(worst)
}

/// Summary statistics of per-trial (or per-period) returns.
pub fn summarize(label: &str, returns: &[f64], opts: &EvalOptions) -> Result<EvalReport, MetricsError> {
    if returns.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            needed: 2,
            got: returns.len(),
        });
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let cr = mean(returns);
    let var = variance(returns, opts.variance);
    Ok(EvalReport {
        label: label.to_string(),
        n_trials: returns.len(),
        cr,
        var,
        rr: EvalReport::risk_return(cr, var, opts.annualization),
        maxdd: None,
        mse_to_target: opts.zeta.map(|z| mse_to_target(returns, z)),
        zeta: opts.zeta,
        returns: opts.keep_returns.then(|| returns.to_vec()),
    })
}

/// Like [`summarize`], additionally computing the maximum drawdown of the
/// series read as consecutive simple returns.
pub fn summarize_period_returns(
    label: &str,
    returns: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport, MetricsError> {
    let mut report = summarize(label, returns, opts)?;
    report.maxdd = Some(max_drawdown(returns)?);
    Ok(report)
}

/// Cumulative rewards of `n_trials` independent episodes, trial `i` using
/// stream `(seed, i)`. Runs in parallel; the output order is by trial.
pub fn sample_returns<E, P>(
    env: &E,
    policy: &P,
    n_trials: usize,
    seed: u64,
    discount: f64,
) -> Result<Vec<f64>, RolloutError>
where
    E: Environment,
    P: Policy,
{
    (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            rollout(env, policy, &mut rng, discount).map(|t| t.cumulative_reward())
        })
        .collect()
}

/// Monte-Carlo evaluation of a policy: CR is the mean episode return and Var
/// its variance over `n_trials` episodes.
pub fn evaluate<E, P>(
    label: &str,
    env: &E,
    policy: &P,
    n_trials: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<EvalReport, MetricsError>
where
    E: Environment,
    P: Policy,
{
    if n_trials < 2 {
        return Err(MetricsError::TooFewSamples {
            needed: 2,
            got: n_trials,
        });
    }
    let returns = sample_returns(env, policy, n_trials, seed, opts.discount)?;
    summarize(label, &returns, opts)
}
