use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use equm::learners::{train_equm_ac, train_policy_gradient, Objective, TrainOptions, TrainReport};
use equm::metrics::{evaluate, pareto_filter, write_report_csv, EvalOptions, EvalReport, FrontierPoint};
use equm::policy::{read_checkpoint, write_checkpoint, write_network, MlpPolicy, ValueNet};

use crate::config::{ExperimentConfig, LearnerSpec, Overrides, RawConfig};
use crate::envs::{check_fits, init_critics, init_policy, AnyEnv};
use crate::error::CliError;
use crate::svg::frontier_svg;

pub const POLICY_FILE: &str = "policy.ckpt";
pub const LOG_FILE: &str = "training_log.csv";
pub const REPORT_FILE: &str = "report.csv";

pub struct TrainedRun {
    pub policy: MlpPolicy,
    pub critics: Option<(ValueNet, ValueNet)>,
    pub train: TrainReport,
    pub report: EvalReport,
}

/// Continues training `policy` (and the critics, for the actor-critic
/// learner) for `opts.episodes` episodes.
pub fn train_in_place(
    env: &AnyEnv,
    policy: &mut MlpPolicy,
    critics: Option<&mut (ValueNet, ValueNet)>,
    learner: &LearnerSpec,
    opts: &TrainOptions,
) -> Result<TrainReport, CliError> {
    let objective = match learner {
        LearnerSpec::Reinforce => Objective::Reinforce,
        LearnerSpec::Equm(u) => Objective::Equm(*u),
        LearnerSpec::Tamar(c) => Objective::Tamar(*c),
        LearnerSpec::Xie(c) => Objective::Xie(*c),
        LearnerSpec::EqumAc { utility, ac, .. } => {
            let (c1, c2) = critics.ok_or_else(|| CliError::Config("equm_ac needs critics".into()))?;
            return Ok(train_equm_ac(env, policy, c1, c2, *utility, ac, opts)?);
        }
    };
    Ok(train_policy_gradient(env, policy, &objective, opts)?)
}

pub fn final_evaluation(env: &AnyEnv, policy: &MlpPolicy, cfg: &ExperimentConfig) -> Result<EvalReport, CliError> {
    let opts = EvalOptions {
        discount: cfg.training.discount,
        ..EvalOptions::episodic()
    }
    .with_zeta(cfg.eval_zeta());
    Ok(evaluate(&cfg.label(), env, policy, cfg.eval.trials, cfg.eval_seed(), &opts)?)
}

/// Trains from a fresh initialization and evaluates the result, without
/// touching the filesystem.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainedRun, CliError> {
    let env = AnyEnv::build(&cfg.env)?;
    let mut policy = init_policy(&env, cfg)?;
    let mut critics = match &cfg.learner {
        LearnerSpec::EqumAc { critic_hidden, .. } => Some(init_critics(&env, cfg, critic_hidden.as_deref())?),
        _ => None,
    };
    let train = train_in_place(&env, &mut policy, critics.as_mut(), &cfg.learner, &cfg.training)?;
    let report = final_evaluation(&env, &policy, cfg)?;
    Ok(TrainedRun {
        policy,
        critics,
        train,
        report,
    })
}

pub fn output_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    cfg.output_dir
        .as_deref()
        .ok_or_else(|| CliError::Config("output.dir: required (or pass --out)".into()))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn checkpoint_text(policy: &MlpPolicy) -> Result<String, CliError> {
    write_checkpoint(policy).map_err(|e| CliError::Numeric(e.to_string()))
}

/// Writes the checkpoint, the training log and the one-row report.
pub fn save_run(dir: &Path, run: &TrainedRun) -> Result<(), CliError> {
    create_dir(dir)?;
    write(&dir.join(POLICY_FILE), &checkpoint_text(&run.policy)?)?;
    if let Some((c1, c2)) = &run.critics {
        for (name, c) in [("critic_first.ckpt", c1), ("critic_second.ckpt", c2)] {
            let text = write_network(c.net()).map_err(|e| CliError::Numeric(e.to_string()))?;
            write(&dir.join(name), &text)?;
        }
    }
    write(&dir.join(LOG_FILE), &run.train.log.to_csv())?;
    write(&dir.join(REPORT_FILE), &write_report_csv(std::slice::from_ref(&run.report)))
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainedRun, CliError> {
    let dir = output_dir(cfg)?.to_path_buf();
    let run = run_training(cfg)?;
    save_run(&dir, &run)?;
    Ok(run)
}

pub fn load_policy(path: &Path) -> Result<MlpPolicy, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    read_checkpoint(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Evaluates a saved policy on the configured environment. The evaluation
/// seed and trial count are the ones `train` would have used.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<EvalReport, CliError> {
    let env = AnyEnv::build(&cfg.env)?;
    let policy = load_policy(checkpoint)?;
    check_fits(&env, &policy)?;
    let report = final_evaluation(&env, &policy, cfg)?;
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        write(&dir.join(REPORT_FILE), &write_report_csv(std::slice::from_ref(&report)))?;
    }
    Ok(report)
}

/// One fully resolved sweep run.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub index: usize,
    pub seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub index: usize,
    pub label: String,
    pub exit_code: i32,
    pub message: String,
}

pub struct SweepOutcome {
    pub reports: Vec<EvalReport>,
    pub failures: Vec<SweepFailure>,
}

/// Keys already visible in the learner label.
const LABELLED_KEYS: [&str; 5] = [
    "learner.method",
    "learner.equm.zeta",
    "learner.tamar.var",
    "learner.xie.lambda",
    "learner.equm_ac.zeta",
];

/// Expands the cross product and validates every run up front, so a bad
/// value list fails before any training starts.
pub fn plan_sweep(raw: &RawConfig, base_dir: &Path, overrides: &Overrides) -> Result<Vec<SweepRun>, CliError> {
    let (base, spec) = raw.split_sweep()?;
    let spec = spec.ok_or_else(|| CliError::Config("sweep: no sweep.* keys in the config".into()))?;
    let combos = spec.combinations();
    let default_seed = match overrides.seed {
        Some(s) => s,
        None => ExperimentConfig::from_raw(&base, base_dir)
            .map(|c| c.training.seed)
            .unwrap_or_default(),
    };
    let seeds = spec.seeds.clone().unwrap_or_else(|| vec![default_seed]);
    let total = combos.len() * seeds.len();
    if total > spec.budget {
        return Err(CliError::Config(format!(
            "sweep.budget: {total} runs requested but the budget is {}",
            spec.budget
        )));
    }
    let mut runs = Vec::with_capacity(total);
    for combo in &combos {
        for &seed in &seeds {
            let mut raw = base.clone();
            for (k, v) in combo {
                raw.set(k, v);
            }
            let mut config = ExperimentConfig::from_raw(&raw, base_dir)?;
            config.apply(&Overrides {
                seed: None,
                out: None,
                paper_scale: overrides.paper_scale,
            });
            config.training.seed = seed;
            let mut label = config.learner.label();
            for (k, v) in combo {
                if !LABELLED_KEYS.contains(&k.as_str()) {
                    let short = k.rsplit('.').next().unwrap_or(k);
                    label.push_str(&format!(" {short}={v}"));
                }
            }
            label.push_str(&format!(" seed={seed}"));
            config.label = Some(label);
            runs.push(SweepRun {
                index: runs.len(),
                seed,
                config,
            });
        }
    }
    Ok(runs)
}

pub fn sweep_run_dir(out: &Path, index: usize) -> PathBuf {
    out.join("runs").join(format!("run_{index:03}"))
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const FAILURES_FILE: &str = "failures.csv";

/// Runs every planned configuration concurrently; failures are recorded and
/// do not stop the others.
pub fn cmd_sweep(runs: &[SweepRun], out: &Path) -> Result<SweepOutcome, CliError> {
    create_dir(out)?;
    let results: Vec<Result<EvalReport, CliError>> = runs
        .par_iter()
        .map(|run| {
            let trained = run_training(&run.config)?;
            save_run(&sweep_run_dir(out, run.index), &trained)?;
            Ok(trained.report)
        })
        .collect();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (run, result) in runs.iter().zip(results) {
        match result {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(SweepFailure {
                index: run.index,
                label: run.config.label(),
                exit_code: e.exit_code(),
                message: e.to_string(),
            }),
        }
    }
    write(&out.join(SWEEP_FILE), &write_report_csv(&reports))?;
    write(&out.join(FAILURES_FILE), &failures_csv(&failures))?;
    Ok(SweepOutcome { reports, failures })
}

fn failures_csv(failures: &[SweepFailure]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["run", "label", "exit_code", "message"];
    w.write_record(header).expect("in-memory write");
    for f in failures {
        w.write_record([
            f.index.to_string(),
            f.label.clone(),
            f.exit_code.to_string(),
            f.message.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 fields")
}

/// Reads `(label, var, cr)` from any CSV with those columns, in any order.
pub fn read_points(path: &Path) -> Result<Vec<FrontierPoint>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing `{name}` column")))
    };
    let (label, var, cr) = (col("label")?, col("var")?, col("cr")?);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let num = |c: usize, name: &str| -> Result<f64, CliError> {
            let field = record.get(c).unwrap_or("");
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("row {}: bad {name} `{field}`", i + 1))),
            }
        };
        points.push(FrontierPoint::new(
            record.get(label).unwrap_or(""),
            num(var, "var")?,
            num(cr, "cr")?,
        ));
    }
    Ok(points)
}

pub const FRONTIER_CSV: &str = "frontier.csv";
pub const FRONTIER_SVG: &str = "frontier.svg";

pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "var", "cr"]).expect("in-memory write");
    for p in points.iter().filter(|p| !p.dominated) {
        w.write_record([p.label.clone(), p.var.to_string(), p.cr.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 fields")
}

/// Pools the points of every input, flags dominated ones and writes the
/// non-dominated rows plus the scatter plot.
pub fn cmd_frontier(inputs: &[PathBuf], out: &Path, emit_svg: bool) -> Result<Vec<FrontierPoint>, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Config("frontier: at least one input CSV is required".into()));
    }
    let mut points = Vec::new();
    for p in inputs {
        points.extend(read_points(p)?);
    }
    let flagged = pareto_filter(points);
    create_dir(out)?;
    write(&out.join(FRONTIER_CSV), &frontier_csv(&flagged))?;
    if emit_svg {
        write(&out.join(FRONTIER_SVG), &frontier_svg(&flagged, "Mean-variance frontier"))?;
    }
    Ok(flagged)
}
