use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "acdc",
    version,
    about = "ADMM plug-and-play with the AC-DC score denoiser"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solve; writes trace.csv, bounds.json and summary.json.
    Solve(RunArgs),
    /// Evaluate the bound constants and run the empirical checks.
    Diagnose(RunArgs),
    /// One solve per (value, seed) pair, aggregated into sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-path assignment such as `schedule.W=5`; repeatable.
    #[arg(long = "override", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    /// Replaces the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the trace's `ms` column with wall-clock times.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dotted config path to vary, e.g. `schedule.J`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values; each is parsed as JSON.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Seeds per value: base, base + 1, ...
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}
