//! Flat `key=value` experiment configuration.
//!
//! ```text
//! # comment
//! env.kind=portfolio_synth
//! env.portfolio_synth.p_risk=0.05
//! learner.method=equm
//! learner.equm.zeta=6
//! training.episodes=20000
//! sweep.learner.equm.zeta=4,6,10
//! sweep.seeds=0,1,2
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use equm::env::{
    DatasetPortfolioConfig, FormatSpec, OptionEnvConfig, PortfolioSynthConfig, RateLock, SentinelPolicy, Units,
};
use equm::learners::{AcConfig, Penalty, TamarConfig, TrainOptions, UtilitySpec, XieConfig};
use equm::policy::{AdamConfig, DecayMode};
use equm::rng::derive_seed;

use crate::error::CliError;

const FINAL_EVAL_DOMAIN: u64 = 0x6669_6e61;
pub const DESK_EVAL_TRIALS: usize = 10_000;
pub const PAPER_EVAL_TRIALS: usize = 100_000;

/// Parsed but uninterpreted `key=value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Splits off the `sweep.*` keys.
    pub fn split_sweep(&self) -> Result<(RawConfig, Option<SweepSpec>), CliError> {
        let mut base = RawConfig::default();
        let mut axes = Vec::new();
        let mut seeds = None;
        let mut budget = 1000;
        let mut any = false;
        for (k, v) in self.iter() {
            let Some(rest) = k.strip_prefix("sweep.") else {
                base.set(k, v);
                continue;
            };
            any = true;
            match rest {
                "seeds" => seeds = Some(parse_list::<u64>(k, v)?),
                "budget" => budget = parse_value::<usize>(k, v)?,
                path => {
                    let values: Vec<String> = v
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if values.is_empty() {
                        return Err(CliError::Config(format!("{k}: empty value list")));
                    }
                    axes.push((path.to_string(), values));
                }
            }
        }
        if !any {
            return Ok((base, None));
        }
        if let Some(s) = &seeds {
            if s.is_empty() {
                return Err(CliError::Config("sweep.seeds: empty value list".into()));
            }
        }
        Ok((base, Some(SweepSpec { axes, seeds, budget })))
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Cross product of parameter values, run once per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<(String, Vec<String>)>,
    pub seeds: Option<Vec<u64>>,
    pub budget: usize,
}

impl SweepSpec {
    /// Every combination of axis values, first axis outermost.
    pub fn combinations(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut next = prefix.clone();
                        next.push((key.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        out
    }
}

/// Tracks which keys have been read so leftovers can be reported.
struct Fields<'a> {
    raw: &'a RawConfig,
    used: BTreeSet<String>,
}

impl<'a> Fields<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self {
            raw,
            used: BTreeSet::new(),
        }
    }

    fn str(&mut self, key: &str) -> Option<&'a str> {
        let v = self.raw.get(key)?;
        self.used.insert(key.to_string());
        Some(v)
    }

    fn required(&mut self, key: &str) -> Result<&'a str, CliError> {
        self.str(key)
            .ok_or_else(|| CliError::Config(format!("{key}: required")))
    }

    fn opt<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.str(key).map(|v| parse_value(key, v)).transpose()
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(CliError::Config(format!("{key}: expected true or false, got `{v}`"))),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .raw
            .iter()
            .map(|(k, _)| k)
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!("unknown or inapplicable key(s): {}", unknown.join(", "))))
        }
    }
}

fn check(cond: bool, key: &str, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key}: {msg}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: FormatSpec,
    pub env: DatasetPortfolioConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    PortfolioSynth(PortfolioSynthConfig),
    Option(OptionEnvConfig),
    Dataset(DatasetSpec),
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::PortfolioSynth(_) => "portfolio_synth",
            Self::Option(_) => "option",
            Self::Dataset(_) => "dataset",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LearnerSpec {
    Reinforce,
    Equm(UtilitySpec),
    Tamar(TamarConfig),
    Xie(XieConfig),
    EqumAc {
        utility: UtilitySpec,
        ac: AcConfig,
        critic_hidden: Option<Vec<usize>>,
    },
}

impl LearnerSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Reinforce => "reinforce".into(),
            Self::Equm(u) => format!("equm zeta={}", u.target()),
            Self::Tamar(c) => format!("tamar var={}", c.variance_target),
            Self::Xie(c) => format!("xie lambda={}", c.lambda),
            Self::EqumAc { utility, .. } => format!("equm_ac zeta={}", utility.target()),
        }
    }

    pub fn utility(&self) -> Option<UtilitySpec> {
        match self {
            Self::Equm(u) | Self::EqumAc { utility: u, .. } => Some(*u),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    pub trials: usize,
    pub seed: Option<u64>,
    /// Target for the `mse_zeta` column; defaults to the learner's target.
    pub zeta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkforwardSpec {
    pub test_months: usize,
    pub train_episodes: usize,
    /// Months of history before each test month that training may use.
    pub train_window: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub learner: LearnerSpec,
    pub policy_hidden: Option<Vec<usize>>,
    pub training: TrainOptions,
    pub eval: EvalSpec,
    pub output_dir: Option<PathBuf>,
    pub emit_svg: bool,
    pub walkforward: WalkforwardSpec,
    pub label: Option<String>,
}

/// Command-line flags that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paper_scale: bool,
}

impl ExperimentConfig {
    /// Relative dataset paths resolve against `base_dir`.
    pub fn from_raw(raw: &RawConfig, base_dir: &Path) -> Result<Self, CliError> {
        let mut f = Fields::new(raw);
        let env = parse_env(&mut f, base_dir)?;
        let learner = parse_learner(&mut f)?;
        let adam = parse_adam(&mut f, "learner.adam", AdamConfig::default())?;
        let policy_hidden = f.str("learner.policy.hidden").map(|v| parse_list("learner.policy.hidden", v)).transpose()?;
        let defaults = TrainOptions::default();
        let training = TrainOptions {
            episodes: f.get("training.episodes", defaults.episodes)?,
            batch: f.get("training.batch", defaults.batch)?,
            seed: f.get("training.seed", defaults.seed)?,
            eval_every: f.get("training.eval_every", defaults.eval_every)?,
            eval_trials: f.get("training.eval_trials", defaults.eval_trials)?,
            discount: f.get("training.discount", defaults.discount)?,
            baseline: f.bool("training.baseline", defaults.baseline)?,
            adam,
        };
        check(training.batch >= 1, "training.batch", "must be at least 1")?;
        check(
            training.discount > 0.0 && training.discount <= 1.0,
            "training.discount",
            "must lie in (0, 1]",
        )?;
        check(
            training.eval_every == 0 || training.eval_trials >= 2,
            "training.eval_trials",
            "must be at least 2",
        )?;
        let eval = EvalSpec {
            trials: f.get("evaluation.trials", DESK_EVAL_TRIALS)?,
            seed: f.opt("evaluation.seed")?,
            zeta: f.opt("evaluation.zeta")?,
        };
        check(eval.trials >= 2, "evaluation.trials", "must be at least 2")?;
        let walkforward = WalkforwardSpec {
            test_months: f.get("walkforward.test_months", 24)?,
            train_episodes: f.get("walkforward.train_episodes", 10)?,
            train_window: f.get("walkforward.train_window", 120)?,
        };
        check(walkforward.test_months >= 2, "walkforward.test_months", "must be at least 2")?;
        let cfg = Self {
            env,
            learner,
            policy_hidden,
            training,
            eval,
            output_dir: f.str("output.dir").map(PathBuf::from),
            emit_svg: f.bool("output.emit_svg", true)?,
            walkforward,
            label: f.str("output.label").map(str::to_string),
        };
        f.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = RawConfig::load(path)?;
        Self::from_raw(&raw, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.training.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
        if o.paper_scale {
            self.eval.trials = PAPER_EVAL_TRIALS;
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.learner.label())
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval
            .seed
            .unwrap_or_else(|| derive_seed(self.training.seed, FINAL_EVAL_DOMAIN))
    }

    pub fn eval_zeta(&self) -> Option<f64> {
        self.eval
            .zeta
            .or_else(|| self.learner.utility().map(|u| u.target()).filter(|z| z.is_finite()))
    }
}

fn parse_env(f: &mut Fields, base_dir: &Path) -> Result<EnvSpec, CliError> {
    let kind = f.required("env.kind")?;
    match kind {
        "portfolio_synth" => {
            let d = PortfolioSynthConfig::default();
            let p = "env.portfolio_synth";
            let rate_lock = match f.str(&format!("{p}.rate_lock")) {
                None | Some("investment") => RateLock::AtInvestment,
                Some("maturity") => RateLock::AtMaturity,
                Some(v) => {
                    return Err(CliError::Config(format!(
                        "{p}.rate_lock: expected investment or maturity, got `{v}`"
                    )))
                }
            };
            let cfg = PortfolioSynthConfig {
                r_liquid: f.get(&format!("{p}.r_liquid"), d.r_liquid)?,
                r_nl_low: f.get(&format!("{p}.r_nl_low"), d.r_nl_low)?,
                r_nl_high: f.get(&format!("{p}.r_nl_high"), d.r_nl_high)?,
                p_switch: f.get(&format!("{p}.p_switch"), d.p_switch)?,
                p_risk: f.get(&format!("{p}.p_risk"), d.p_risk)?,
                maturity_w: f.get(&format!("{p}.maturity_w"), d.maturity_w)?,
                fraction_w: f.get(&format!("{p}.fraction_w"), d.fraction_w)?,
                capital_m: f.get(&format!("{p}.capital_m"), d.capital_m)?,
                horizon_t: f.get(&format!("{p}.horizon_t"), d.horizon_t)?,
                rate_lock,
            };
            cfg.validate().map_err(|e| CliError::Config(format!("{p}: {}", e.0)))?;
            Ok(EnvSpec::PortfolioSynth(cfg))
        }
        "option" => {
            let d = OptionEnvConfig::default();
            let p = "env.option";
            let cfg = OptionEnvConfig {
                strike_call: f.get(&format!("{p}.strike_call"), d.strike_call)?,
                strike_put: f.get(&format!("{p}.strike_put"), d.strike_put)?,
                maturity: f.get(&format!("{p}.maturity"), d.maturity)?,
                x0: f.get(&format!("{p}.x0"), d.x0)?,
                p_up: f.get(&format!("{p}.p_up"), d.p_up)?,
                f_up: f.get(&format!("{p}.f_up"), d.f_up)?,
                f_down: f.get(&format!("{p}.f_down"), d.f_down)?,
            };
            cfg.validate().map_err(|e| CliError::Config(format!("{p}: {}", e.0)))?;
            Ok(EnvSpec::Option(cfg))
        }
        "dataset" => {
            let p = "env.dataset";
            let key = format!("{p}.path");
            let rel = f.required(&key)?;
            let path = base_dir.join(rel);
            check(path.is_file(), &key, &format!("file `{}` does not exist", path.display()))?;
            let units = f
                .str(&format!("{p}.units"))
                .map(|v| Units::parse(v).ok_or_else(|| CliError::Config(format!("{p}.units: expected percent or fraction, got `{v}`"))))
                .transpose()?;
            let sentinel_policy = match f.str(&format!("{p}.sentinel_policy")) {
                None | Some("reject") => SentinelPolicy::Reject,
                Some("zero_fill") => SentinelPolicy::ZeroFill,
                Some(v) => {
                    return Err(CliError::Config(format!(
                        "{p}.sentinel_policy: expected reject or zero_fill, got `{v}`"
                    )))
                }
            };
            let mut format = FormatSpec {
                units,
                sentinel_policy,
                ..FormatSpec::default()
            };
            if let Some(c) = f.str(&format!("{p}.date_column")) {
                format.date_column = c.to_string();
            }
            if let Some(v) = f.str(&format!("{p}.sentinel_values")) {
                format.sentinel_values = parse_list(&format!("{p}.sentinel_values"), v)?;
            }
            let from: Option<u32> = f.opt(&format!("{p}.from"))?;
            let to: Option<u32> = f.opt(&format!("{p}.to"))?;
            if from.is_some() || to.is_some() {
                format.window = Some((from.unwrap_or(0), to.unwrap_or(u32::MAX)));
            }
            let d = DatasetPortfolioConfig::default();
            let env = DatasetPortfolioConfig {
                lookback: f.get(&format!("{p}.lookback"), d.lookback)?,
                episode_len: f.get(&format!("{p}.episode_len"), d.episode_len)?,
                train_window: None,
            };
            check(env.lookback > 0, &format!("{p}.lookback"), "must be positive")?;
            check(env.episode_len > 0, &format!("{p}.episode_len"), "must be positive")?;
            Ok(EnvSpec::Dataset(DatasetSpec { path, format, env }))
        }
        other => Err(CliError::Config(format!(
            "env.kind: expected portfolio_synth, option or dataset, got `{other}`"
        ))),
    }
}

fn parse_utility(f: &mut Fields, prefix: &str) -> Result<UtilitySpec, CliError> {
    let zeta: Option<f64> = f.opt(&format!("{prefix}.zeta"))?;
    let alpha: Option<f64> = f.opt(&format!("{prefix}.alpha"))?;
    let beta: Option<f64> = f.opt(&format!("{prefix}.beta"))?;
    let u = match (zeta, alpha, beta) {
        (Some(z), None, None) => UtilitySpec::from_target(z),
        (None, Some(a), Some(b)) => UtilitySpec::new(a, b),
        (None, None, None) => return Err(CliError::Config(format!("{prefix}.zeta: required"))),
        _ => {
            return Err(CliError::Config(format!(
                "{prefix}: give either zeta or both alpha and beta"
            )))
        }
    };
    u.map_err(|e| CliError::Config(format!("{prefix}: {e}")))
}

fn parse_learner(f: &mut Fields) -> Result<LearnerSpec, CliError> {
    let method = f.required("learner.method")?;
    let spec = match method {
        "reinforce" => LearnerSpec::Reinforce,
        "equm" => LearnerSpec::Equm(parse_utility(f, "learner.equm")?),
        "tamar" => {
            let p = "learner.tamar";
            let var: f64 = f.opt(&format!("{p}.var"))?.ok_or_else(|| CliError::Config(format!("{p}.var: required")))?;
            let mut c = TamarConfig::new(var);
            c.penalty_weight = f.get(&format!("{p}.delta"), c.penalty_weight)?;
            c.tracker_rate = f.get(&format!("{p}.tracker_rate"), c.tracker_rate)?;
            c.penalty = match f.str(&format!("{p}.penalty")) {
                None | Some("one_sided") => Penalty::LinearOneSided,
                Some("equality") => Penalty::LinearEquality,
                Some("quadratic") => Penalty::Quadratic,
                Some(v) => {
                    return Err(CliError::Config(format!(
                        "{p}.penalty: expected one_sided, equality or quadratic, got `{v}`"
                    )))
                }
            };
            check(var >= 0.0, &format!("{p}.var"), "must be non-negative")?;
            check(c.penalty_weight >= 0.0, &format!("{p}.delta"), "must be non-negative")?;
            check(
                c.tracker_rate > 0.0 && c.tracker_rate <= 1.0,
                &format!("{p}.tracker_rate"),
                "must lie in (0, 1]",
            )?;
            LearnerSpec::Tamar(c)
        }
        "xie" => {
            let p = "learner.xie";
            let lambda: f64 = f
                .opt(&format!("{p}.lambda"))?
                .ok_or_else(|| CliError::Config(format!("{p}.lambda: required")))?;
            let mut c = XieConfig::new(lambda);
            c.tracker_rate = f.get(&format!("{p}.tracker_rate"), c.tracker_rate)?;
            check(lambda > 0.0 && lambda.is_finite(), &format!("{p}.lambda"), "must be positive")?;
            check(
                c.tracker_rate > 0.0 && c.tracker_rate <= 1.0,
                &format!("{p}.tracker_rate"),
                "must lie in (0, 1]",
            )?;
            LearnerSpec::Xie(c)
        }
        "equm_ac" => {
            let p = "learner.equm_ac";
            let utility = parse_utility(f, p)?;
            let d = AcConfig::default();
            let ac = AcConfig {
                n_step: f.get(&format!("{p}.n_step"), d.n_step)?,
                critic_adam: parse_adam(f, &format!("{p}.critic_adam"), d.critic_adam)?,
            };
            check(ac.n_step >= 1, &format!("{p}.n_step"), "must be at least 1")?;
            let critic_hidden = f
                .str(&format!("{p}.critic_hidden"))
                .map(|v| parse_list(&format!("{p}.critic_hidden"), v))
                .transpose()?;
            LearnerSpec::EqumAc {
                utility,
                ac,
                critic_hidden,
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "learner.method: expected reinforce, equm, tamar, xie or equm_ac, got `{other}`"
            )))
        }
    };
    Ok(spec)
}

fn parse_adam(f: &mut Fields, prefix: &str, d: AdamConfig) -> Result<AdamConfig, CliError> {
    let decay_mode = match f.str(&format!("{prefix}.decay")) {
        None => d.decay_mode,
        Some("decoupled") => DecayMode::Decoupled,
        Some("coupled") => DecayMode::CoupledL2,
        Some(v) => {
            return Err(CliError::Config(format!(
                "{prefix}.decay: expected decoupled or coupled, got `{v}`"
            )))
        }
    };
    let c = AdamConfig {
        learning_rate: f.get(&format!("{prefix}.lr"), d.learning_rate)?,
        beta1: f.get(&format!("{prefix}.beta1"), d.beta1)?,
        beta2: f.get(&format!("{prefix}.beta2"), d.beta2)?,
        epsilon: f.get(&format!("{prefix}.eps"), d.epsilon)?,
        weight_decay: f.get(&format!("{prefix}.weight_decay"), d.weight_decay)?,
        decay_mode,
    };
    check(c.learning_rate > 0.0, &format!("{prefix}.lr"), "must be positive")?;
    check(c.weight_decay >= 0.0, &format!("{prefix}.weight_decay"), "must be non-negative")?;
    check((0.0..1.0).contains(&c.beta1), &format!("{prefix}.beta1"), "must lie in [0, 1)")?;
    check((0.0..1.0).contains(&c.beta2), &format!("{prefix}.beta2"), "must lie in [0, 1)")?;
    check(c.epsilon > 0.0, &format!("{prefix}.eps"), "must be positive")?;
    Ok(c)
}
