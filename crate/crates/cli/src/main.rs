//! `batchts`: run batch Thompson Sampling experiments from a JSON config.
//!
//!   batchts run     config.json [--seed N] [--runs N] [--out DIR]
//!   batchts sweep   config.json ...
//!   batchts compare config.json ...
//!   batchts check   config.json ...
//!
//! `check` exits with status 1 when any scheduler invariant is violated.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use batchts_core::{execute, ExperimentConfig, Mode};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "batchts",
    version,
    about = "Batch Thompson Sampling experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replicated runs of the config's policy; writes summary.csv.
    Run(Target),
    /// Batch count against the arm count or horizon; writes sweep.csv.
    Sweep(Target),
    /// Every policy in the config; writes summary_<policy>.csv each.
    Compare(Target),
    /// Runs with scheduler invariants asserted every round.
    Check(Target),
}

#[derive(Debug, Args)]
struct Target {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicated runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Mode, Target) {
        match self {
            Command::Run(t) => (Mode::Run, t),
            Command::Sweep(t) => (Mode::Sweep, t),
            Command::Compare(t) => (Mode::Compare, t),
            Command::Check(t) => (Mode::Check, t),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let (mode, target) = cli.command.split();
    let mut config = ExperimentConfig::from_path(&target.config)
        .with_context(|| format!("loading {}", target.config.display()))?;
    if let Some(seed) = target.seed {
        config.seed = seed;
    }
    if let Some(runs) = target.runs {
        config.runs = runs;
    }
    if let Some(out) = target.out {
        config.out = Some(out);
    }

    let report = execute(&config, mode)?;
    for line in &report.lines {
        println!("{line}");
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    if mode == Mode::Check && report.violations > 0 {
        eprintln!("{} invariant violations", report.violations);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
