use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saferl::config::{Config, SafetyMode};
use saferl::harness::{
    cmd_collect, cmd_evaluate, cmd_export, cmd_train, cmd_train_rnn, CollectOptions, EvalOptions, TrainOptions,
    TrainRnnOptions,
};

#[derive(Parser)]
#[command(name = "saferl", version, about = "Highway DDQN agent with rule-based and learned safety layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> saferl::Result<Config> {
        match &self.config {
            Some(p) => Config::load(p),
            None => Ok(Config::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy variant.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "handcrafted")]
        variant: SafetyMode,
        #[arg(long)]
        episodes: Option<usize>,
        /// Predictor checkpoint (required by the `both` variant).
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Evaluate a frozen policy over traffic densities.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episodes per density.
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated traffic counts, e.g. 2,4,6.
        #[arg(long, value_delimiter = ',')]
        densities: Option<Vec<usize>>,
        /// Predictor checkpoint; enables the lookahead veto.
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Record driving data from a frozen policy.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train the lookahead predictor on collected data.
    TrainRnn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Merge run directories into learning-curve and collision tables.
    Export {
        /// Directory of run directories (or a single run directory).
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> saferl::Result<()> {
    match cli.command {
        Command::Train {
            common,
            variant,
            episodes,
            predictor,
        } => {
            let cfg = common.load()?;
            let s = cmd_train(
                &cfg,
                &TrainOptions {
                    variant,
                    seed: common.seed,
                    episodes,
                    predictor,
                    out: common.out,
                },
            )?;
            for r in &s.partial_evals {
                println!(
                    "episode {:>5}  mean reward {:>9.2}  collisions {}",
                    r.episode, r.mean_cumulative_reward, r.collisions
                );
            }
            println!("policy written to {}", s.online.display());
        }
        Command::Evaluate {
            common,
            checkpoint,
            episodes,
            densities,
            predictor,
            label,
        } => {
            let cfg = common.load()?;
            let report = cmd_evaluate(
                &cfg,
                &EvalOptions {
                    checkpoint,
                    episodes,
                    densities,
                    seed: common.seed,
                    predictor,
                    label,
                    out: common.out,
                },
            )?;
            println!("{}", report.label);
            for r in &report.rows {
                println!(
                    "density {}  collisions {:>4}/{}  mean reward {:.2}",
                    r.density, r.collisions, r.episodes, r.mean_cumulative_reward
                );
            }
        }
        Command::Collect {
            common,
            checkpoint,
            episodes,
        } => {
            let cfg = common.load()?;
            let d = cmd_collect(
                &cfg,
                &CollectOptions {
                    checkpoint,
                    episodes,
                    seed: common.seed,
                    out: common.out,
                },
            )?;
            println!("{} episodes, {} steps", d.episodes.len(), d.total_pairs());
        }
        Command::TrainRnn { common, data } => {
            let cfg = common.load()?;
            let (_, report) = cmd_train_rnn(
                &cfg,
                &TrainRnnOptions {
                    data,
                    seed: common.seed,
                    out: common.out,
                },
            )?;
            println!(
                "held-out one-step RMSE: max {:.4} over {} windows",
                report.max_validation_rmse, report.validation_windows
            );
        }
        Command::Export { runs, out } => {
            let s = cmd_export(&runs, &out)?;
            println!("{} learning curves, policies: {}", s.series, s.policies.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
