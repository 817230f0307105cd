//! `nullnet` — train small classifiers, mount transfer attacks against them,
//! and serve a trained model as a label-only oracle.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::bail;
use clap::{Parser, Subcommand};

use commands::TargetRef;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "nullnet", version, about = "Adversarial-example attack and defense experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a target classifier (plain, robust, or NULL-defended).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the checkpoint and logs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a substitute and transfer adversarial examples to a target.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Target checkpoint file (in-process oracle).
        #[arg(long)]
        target: Option<PathBuf>,
        /// Target oracle address, HOST:PORT.
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a checkpoint as a JSON-lines label oracle over TCP.
    ServeOracle {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Port to bind on 127.0.0.1; 0 picks a free port.
        #[arg(long)]
        port: u16,
    },
    /// Report a checkpoint's accuracy on the configured test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nullnet-out"))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config, seed, out } => {
            let config = load_config(&config, seed)?;
            commands::cmd_train(&config, &out_dir(out, &config))
        }
        Command::Attack {
            config,
            target,
            oracle,
            seed,
            out,
        } => {
            let config = load_config(&config, seed)?;
            let target = match (target, oracle) {
                (Some(path), None) => TargetRef::Checkpoint(path),
                (None, Some(addr)) => TargetRef::Oracle(addr),
                _ => bail!("attack needs exactly one of --target or --oracle"),
            };
            commands::cmd_attack(&config, &target, &out_dir(out, &config))
        }
        Command::ServeOracle { checkpoint, port } => {
            commands::cmd_serve_oracle(&checkpoint, port)
        }
        Command::Evaluate {
            checkpoint,
            config,
            out,
        } => {
            let config = load_config(&config, None)?;
            commands::cmd_evaluate(&checkpoint, &config, &out_dir(out, &config))
        }
    }
}
