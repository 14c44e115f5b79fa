use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use equm::metrics::write_report_csv;
use equm_cli::commands::{cmd_evaluate, cmd_frontier, cmd_sweep, cmd_train, frontier_csv, plan_sweep};
use equm_cli::walkforward::cmd_walkforward;
use equm_cli::{checks, CliError, ExperimentConfig, Overrides, RawConfig};

#[derive(Parser)]
#[command(name = "equm", version, about = "Mean-variance policy learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (`key=value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `training.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate on 100,000 trials instead of 10,000.
    #[arg(long)]
    paper_scale: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            paper_scale: self.paper_scale,
        }
    }

    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and evaluate it.
    Train(Common),
    /// Evaluate a saved policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every combination of the `sweep.*` value lists.
    Sweep(Common),
    /// Flag dominated points in one or more report CSVs and plot them.
    Frontier {
        #[arg(long)]
        out: PathBuf,
        /// Skip the SVG plot.
        #[arg(long)]
        no_svg: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rolling one-month-ahead backtest on a returns dataset.
    Walkforward(Common),
    /// Run the built-in gradient and metric self-checks.
    OracleCheck,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => {
            let run = cmd_train(&c.load()?)?;
            print!("{}", write_report_csv(std::slice::from_ref(&run.report)));
        }
        Command::Evaluate { common, checkpoint } => {
            let report = cmd_evaluate(&common.load()?, &checkpoint)?;
            print!("{}", write_report_csv(std::slice::from_ref(&report)));
        }
        Command::Sweep(c) => {
            let raw = RawConfig::load(&c.config)?;
            let base_dir = c.config.parent().map(PathBuf::from).unwrap_or_default();
            let runs = plan_sweep(&raw, &base_dir, &c.overrides())?;
            let out = match (&c.out, raw.get("output.dir")) {
                (Some(o), _) => o.clone(),
                (None, Some(d)) => PathBuf::from(d),
                (None, None) => return Err(CliError::Config("output.dir: required (or pass --out)".into())),
            };
            let outcome = cmd_sweep(&runs, &out)?;
            print!("{}", write_report_csv(&outcome.reports));
            for f in &outcome.failures {
                eprintln!("run {} ({}) failed: {}", f.index, f.label, f.message);
            }
            // partial failures are reported in failures.csv; a sweep with nothing to show is an error
            if let (true, Some(f)) = (outcome.reports.is_empty(), outcome.failures.first()) {
                let msg = format!("every run failed; first: {}", f.message);
                return Err(match f.exit_code {
                    3 => CliError::Incompatible(msg),
                    4 => CliError::Numeric(msg),
                    _ => CliError::Input(msg),
                });
            }
        }
        Command::Frontier { out, no_svg, inputs } => {
            let points = cmd_frontier(&inputs, &out, !no_svg)?;
            print!("{}", frontier_csv(&points));
        }
        Command::Walkforward(c) => {
            let result = cmd_walkforward(&c.load()?)?;
            print!(
                "{}",
                write_report_csv(&[result.strategy.clone(), result.equal_weight.clone()])
            );
        }
        Command::OracleCheck => {
            let results = checks::run_all();
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().any(|r| !r.passed) {
                return Err(CliError::Numeric("self-check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
