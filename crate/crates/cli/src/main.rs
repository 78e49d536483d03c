//! `acdc`: run solves, diagnostics and parameter sweeps from a JSON config.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 bad config, 3 solver
//! divergence.

mod args;
mod commands;
mod error;
mod output;
mod sweep;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ACDC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Sweep(a) => sweep::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
