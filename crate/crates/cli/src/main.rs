//! `ringsim` command line: one subcommand per pipeline stage.
//!
//! Settings resolve as flag > `RINGSIM_*` environment variable > config file > built-in default.
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

/// A problem with the user's inputs rather than with the run itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(name = "ringsim", version, about = "Mixed-traffic ring-road simulation and training pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Experiment TOML; unknown keys are rejected.
    #[arg(long, global = true, env = "RINGSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Root seed; rollouts use seed..seed+n.
    #[arg(long, global = true, env = "RINGSIM_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "RINGSIM_ROLLOUTS")]
    rollouts: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "RINGSIM_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run rollouts, write trajectory logs and a metrics report.
    Simulate,
    /// Fit the behavioural-cloning acceleration model.
    TrainBc {
        /// Trajectory CSV or prepared `ego_v,headway,leader_v,accel` table.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate rule-labelled rollouts and train the congestion classifier.
    TrainClassifier,
    /// Train a robot-vehicle policy with PPO on the ring.
    TrainRl,
    /// Extract car-following segments, cloning rows and manoeuvre statistics.
    FilterData {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run every configured controller under the perturbation protocol.
    Evaluate,
}

fn resolve(g: &GlobalArgs) -> anyhow::Result<config::ExperimentConfig> {
    let mut cfg = config::load(g.config.as_deref()).map_err(|e| Invalid(format!("{e:#}")))?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.rollouts {
        cfg.rollouts = n;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    // One seed drives every stream.
    cfg.rollout.seed = cfg.seed;
    cfg.rl.env.rollout.seed = cfg.seed;
    cfg.rl.ppo.seed = cfg.seed;
    cfg.classifier.dataset.seed = cfg.seed;
    cfg.classifier.train.seed = cfg.seed;
    cfg.bc.train.seed = cfg.seed;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli.global)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::TrainBc { input } => commands::train_bc_cmd(&cfg, input.as_deref()),
        Command::TrainClassifier => commands::train_classifier_cmd(&cfg),
        Command::TrainRl => commands::train_rl(&cfg),
        Command::FilterData { input } => commands::filter_data(&cfg, &input),
        Command::Evaluate => commands::evaluate(&cfg),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(r) = cause.downcast_ref::<ringsim::Error>() {
            use ringsim::Error::*;
            if matches!(r, Config(_) | Parse { .. } | MissingColumn(_) | Dimension { .. } | Toml(_) | ModelVersion(_)) {
                return 1;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
