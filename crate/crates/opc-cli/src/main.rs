//! `opc`: run averaged-trajectory experiments from an INI config.
//!
//! Every command reads one experiment config and writes its artifacts into
//! the output directory (`[output] dir` or `--out`). CSV outputs are
//! deterministic for a fixed config and seeds; timing and build info go into
//! `.meta` sidecars next to them.

mod commands;
mod config;
mod error;
mod model_file;
mod output;
mod pipeline;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "opc", version, about = "Averaged-trajectory experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one measured trajectory and write measured.csv.
    Simulate(RunArgs),
    /// Average a Monte Carlo ensemble and write mc_mean.csv.
    Mc(RunArgs),
    /// Fit the memory-corrected model and write model.txt.
    Fit(RunArgs),
    /// Generate the averaged trajectory from a saved model.
    Generate(RunArgs),
    /// Compare Monte Carlo, fitted, and DMDc trajectories.
    Compare(RunArgs),
    /// Time Monte Carlo projection against model generation.
    Bench(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (INI).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace every seed in the config with this one.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', "; "));
            ExitCode::FAILURE
        }
    }
}

type CommandFn = fn(&ExperimentConfig, bool) -> Result<(), CliError>;

fn run(cmd: &Cmd) -> Result<(), CliError> {
    let (args, command): (&RunArgs, CommandFn) = match cmd {
        Cmd::Simulate(a) => (a, commands::simulate),
        Cmd::Mc(a) => (a, commands::mc),
        Cmd::Fit(a) => (a, commands::fit),
        Cmd::Generate(a) => (a, commands::generate),
        Cmd::Compare(a) => (a, commands::compare),
        Cmd::Bench(a) => (a, commands::bench),
    };
    let cfg = ExperimentConfig::load(&args.config, args.out.as_deref(), args.seed)?;
    command(&cfg, args.quiet)
}
