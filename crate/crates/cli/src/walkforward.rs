//! Rolling out-of-sample backtest on a returns dataset.
//!
//! For each test month the policy keeps training for a few episodes on the
//! trailing window, then its softmax output at that month is held for one
//! month. The policy is carried over from month to month.

use std::path::Path;

use equm::env::{portfolio_return, DatasetPortfolioConfig, DatasetPortfolioEnv};
use equm::learners::TrainOptions;
use equm::metrics::{summarize_period_returns, write_report_csv, EvalOptions, EvalReport};
use equm::rng::derive_seed;
use equm::Policy;

use crate::commands::{output_dir, train_in_place, REPORT_FILE};
use crate::config::{EnvSpec, ExperimentConfig, LearnerSpec};
use crate::envs::{init_critics, init_policy, load_dataset, AnyEnv};
use crate::error::CliError;

pub const WALKFORWARD_FILE: &str = "walkforward.csv";
pub const EW_LABEL: &str = "equal_weight";

#[derive(Clone, Debug, PartialEq)]
pub struct WalkforwardRow {
    pub month: usize,
    pub date: u32,
    pub strategy: f64,
    pub equal_weight: f64,
}

#[derive(Clone, Debug)]
pub struct WalkforwardResult {
    pub rows: Vec<WalkforwardRow>,
    pub strategy: EvalReport,
    pub equal_weight: EvalReport,
}

/// Reference strategy: hold every asset with weight `1/n`.
pub fn equal_weight(returns: &[f64]) -> f64 {
    returns.iter().sum::<f64>() / returns.len() as f64
}

pub fn run_walkforward(cfg: &ExperimentConfig) -> Result<WalkforwardResult, CliError> {
    let EnvSpec::Dataset(spec) = &cfg.env else {
        return Err(CliError::Config(format!(
            "env.kind: walkforward needs a dataset environment, got {}",
            cfg.env.kind()
        )));
    };
    let wf = &cfg.walkforward;
    let data = load_dataset(&spec.path, &spec.format)?;
    let (months, lookback, episode) = (data.n_months(), spec.env.lookback, spec.env.episode_len);
    let needed = lookback + episode + wf.test_months;
    if months < needed {
        return Err(CliError::Config(format!(
            "walkforward needs at least {needed} months ({lookback} lookback + {episode} training episode + {} test), \
             the dataset has {months}",
            wf.test_months
        )));
    }
    if wf.train_window < episode {
        return Err(CliError::Config(format!(
            "walkforward.train_window: {} months cannot hold a {episode}-month episode",
            wf.train_window
        )));
    }

    let full = AnyEnv::Dataset(
        DatasetPortfolioEnv::new(data.clone(), spec.env.clone()).map_err(|e| CliError::Config(e.to_string()))?,
    );
    let mut policy = init_policy(&full, cfg)?;
    let mut critics = match &cfg.learner {
        LearnerSpec::EqumAc { critic_hidden, .. } => Some(init_critics(&full, cfg, critic_hidden.as_deref())?),
        _ => None,
    };

    let first_test = months - wf.test_months;
    let mut rows = Vec::with_capacity(wf.test_months);
    for month in first_test..months {
        if wf.train_episodes > 0 {
            let env = AnyEnv::Dataset(
                DatasetPortfolioEnv::new(
                    data.clone(),
                    DatasetPortfolioConfig {
                        train_window: Some((month.saturating_sub(wf.train_window), month)),
                        ..spec.env.clone()
                    },
                )
                .map_err(|e| CliError::Config(e.to_string()))?,
            );
            let opts = TrainOptions {
                episodes: wf.train_episodes,
                seed: derive_seed(cfg.training.seed, month as u64),
                eval_every: 0,
                ..cfg.training.clone()
            };
            train_in_place(&env, &mut policy, critics.as_mut(), &cfg.learner, &opts)?;
        }
        let AnyEnv::Dataset(env) = &full else { unreachable!() };
        let weights = policy.action_probs(&env.observation_at(month)).map_err(|e| CliError::Numeric(e.to_string()))?;
        let realized = data.row(month);
        rows.push(WalkforwardRow {
            month,
            date: data.dates()[month],
            strategy: portfolio_return(realized, &weights),
            equal_weight: equal_weight(realized),
        });
    }

    let opts = EvalOptions::default();
    let series = |f: fn(&WalkforwardRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let strategy = summarize_period_returns(&cfg.label(), &series(|r| r.strategy), &opts)?;
    let equal_weight = summarize_period_returns(EW_LABEL, &series(|r| r.equal_weight), &opts)?;
    Ok(WalkforwardResult {
        rows,
        strategy,
        equal_weight,
    })
}

pub fn rows_csv(rows: &[WalkforwardRow]) -> String {
    let mut out = String::from("month,date,strategy,equal_weight\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.month, r.date, r.strategy, r.equal_weight));
    }
    out
}

pub fn cmd_walkforward(cfg: &ExperimentConfig) -> Result<WalkforwardResult, CliError> {
    let dir = output_dir(cfg)?.to_path_buf();
    let result = run_walkforward(cfg)?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(Path::new(&path), e))
    };
    write(WALKFORWARD_FILE, rows_csv(&result.rows))?;
    write(
        REPORT_FILE,
        write_report_csv(&[result.strategy.clone(), result.equal_weight.clone()]),
    )?;
    Ok(result)
}
