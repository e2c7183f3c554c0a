//! Configuration-driven experiment runner for intent demonstration games.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod check;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use intent_games::environments::EnvironmentName;

use crate::check::Proposition;
use crate::config::{default_config, prepare, read_config};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "intent-games",
    version,
    about = "Intent demonstration experiments"
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, env = "INTENT_GAMES_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true, env = "INTENT_GAMES_OUT")]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long, global = true, env = "INTENT_GAMES_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps; all cores when absent.
    #[arg(long, global = true, env = "INTENT_GAMES_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every configured model and write rollouts, summary and plots.
    Run,
    /// Run an exact proposition check on an LQ environment.
    Check {
        #[arg(value_enum)]
        proposition: Proposition,
    },
    /// Time equilibrium solves, teaching plans and teaching actions.
    Bench,
    /// Print a complete configuration with default parameters.
    PrintConfig { environment: EnvironmentName },
}

fn load(cli: &Cli, require_models: bool) -> Result<config::Experiment, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("config: no configuration file given (--config)".into()))?;
    let mut cfg = read_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    prepare(cfg, require_models)
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("threads: must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    Ok(())
}

/// Runs the parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<u8, CliError> {
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Run => {
            let exp = load(&cli, true)?;
            for path in run::execute(&exp)? {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::Check { proposition } => {
            let exp = load(&cli, false)?;
            Ok(if check::execute(&exp, *proposition)? {
                0
            } else {
                1
            })
        }
        Command::Bench => {
            let exp = load(&cli, false)?;
            bench::execute(&exp)?;
            Ok(0)
        }
        Command::PrintConfig { environment } => {
            let cfg = default_config(*environment)?;
            let text =
                toml::to_string(&cfg).map_err(|e| CliError::Config(format!("config: {e}")))?;
            print!("{text}");
            Ok(0)
        }
    }
}
