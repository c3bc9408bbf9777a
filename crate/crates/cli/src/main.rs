//! `koopman`: build prior Koopman matrices, run forward prediction
//! experiments and estimate parameters from a TOML experiment config.

// `!(a < b)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::{parse_config, ExperimentConfig};

#[derive(Parser)]
#[command(name = "koopman", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; every key is optional.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set nm.f_tol=1e-6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Base seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Prior Koopman matrix and generator at `theta_assumed`.
    BuildPrior(Common),
    /// Snapshot pairs of the true system.
    Simulate(Common),
    /// Multi-step prediction error of the updated prior vs. plain EDMD.
    Forward(Common),
    /// One-step predictions on the evaluation grid.
    Onestep(Common),
    /// Scalar parameter estimate by the intersection sweep over `theta_assumed`.
    InvertSweep(Common),
    /// Repeated Nelder-Mead estimation with random true parameters.
    InvertNm(Common),
    /// Print the effective config (defaults, file and overrides) as TOML.
    ShowConfig(Common),
    /// Summary of a Koopman matrix file.
    MatrixInfo {
        #[command(flatten)]
        common: Common,
        /// Matrix file; `<output_dir>/prior.txt` by default.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let doc = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&doc, &common.overrides)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildPrior(c) => commands::build_prior(&load(&c)?),
        Command::Simulate(c) => commands::simulate(&load(&c)?),
        Command::Forward(c) => commands::forward(&load(&c)?),
        Command::Onestep(c) => commands::onestep(&load(&c)?),
        Command::InvertSweep(c) => commands::invert_sweep(&load(&c)?),
        Command::InvertNm(c) => commands::invert_nm(&load(&c)?),
        Command::ShowConfig(c) => {
            print!("{}", load(&c)?.to_toml());
            Ok(())
        }
        Command::MatrixInfo { common, matrix } => {
            commands::matrix_info(&load(&common)?, matrix.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}
