//! `pcm-forge`: simulate, optimize and compare PCM cooling scenarios.

mod commands;
mod compare;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcm_forge_core::solver::SolveOptions;

use crate::commands::RunArgs;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pcm-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if needed.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace the configured disturbance profile with this CSV file.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out a fixed design under an all-fixed control policy.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize the design (and any optimized control channels).
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        starts: usize,
    },
    /// Tabulate objectives of completed runs with ratios against the first.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        /// Also write comparison.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl From<Common> for RunArgs {
    fn from(c: Common) -> Self {
        RunArgs {
            config: c.config,
            out: c.out,
            profile: c.profile,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => commands::simulate(&common.into()),
        Command::Optimize {
            common,
            seed,
            starts,
        } => {
            let options = SolveOptions {
                seed,
                n_starts: starts,
                ..SolveOptions::default()
            };
            commands::optimize(&common.into(), options)
        }
        Command::Compare { runs, out } => compare::compare(&runs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Solver { logs, .. } = &e {
                for p in logs {
                    eprintln!("  start log: {}", p.display());
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
