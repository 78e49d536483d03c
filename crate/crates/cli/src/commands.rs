use std::path::{Path, PathBuf};
use std::time::Instant;

use acdc_core::config::ExperimentConfig;
use acdc_core::experiment::{diagnose as run_checks, Problem, RunSummary};
use acdc_core::solver::write_trace_csv;

use crate::args::RunArgs;
use crate::error::CliResult;
use crate::output::{
    load_config, out_dir, write_atomic, write_coercivity_csv, write_json, write_smoothness_csv,
    RunManifest,
};

/// Files produced by one solve.
pub struct SolveFiles {
    pub trace: PathBuf,
    pub bounds: PathBuf,
    pub summary: PathBuf,
}

/// Solves `cfg` with its own seed and writes the trace, bound report and
/// summary into `dir`.
pub fn solve_into(
    cfg: &ExperimentConfig,
    dir: &Path,
    timing: bool,
) -> CliResult<(RunSummary, SolveFiles)> {
    let problem = Problem::<f64>::build(cfg, cfg.seed)?;
    let mut opts = problem.options()?;
    opts.timing = timing;
    let out = problem.solve(&opts)?;
    let summary = RunSummary::new(&problem, &out)?;
    let bounds = problem.bound_report(out.trace.len(), cfg.solver.rho)?;
    let files = SolveFiles {
        trace: dir.join("trace.csv"),
        bounds: dir.join("bounds.json"),
        summary: dir.join("summary.json"),
    };
    write_atomic(&files.trace, |buf| write_trace_csv(&out.trace, buf))?;
    write_json(&files.bounds, &bounds)?;
    write_json(&files.summary, &summary)?;
    Ok((summary, files))
}

pub fn solve(args: &RunArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = load_config(args, &[])?;
    let dir = out_dir(args, &cfg);
    let (summary, files) = solve_into(&cfg, &dir, args.timing)?;
    let manifest = RunManifest::new(
        "solve",
        &cfg,
        vec![cfg.seed],
        vec![files.trace, files.bounds, files.summary],
        started.elapsed().as_secs_f64() * 1e3,
    );
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("{}", summary.line());
    Ok(())
}

pub fn diagnose(args: &RunArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = load_config(args, &[])?;
    let dir = out_dir(args, &cfg);
    let problem = Problem::<f64>::build(&cfg, cfg.seed)?;
    let report = run_checks(&problem)?;
    let mut outputs = vec![dir.join("bounds.json"), dir.join("checks.json")];
    write_json(&outputs[0], &report.bounds)?;
    write_json(&outputs[1], &report.checks)?;
    if let Some(s) = &report.smoothness {
        let p = dir.join("smoothness.csv");
        write_smoothness_csv(&p, s)?;
        outputs.push(p);
    }
    if let Some(c) = &report.coercivity {
        let p = dir.join("coercivity.csv");
        write_coercivity_csv(&p, c)?;
        outputs.push(p);
    }
    let detail = dir.join("diagnostics.json");
    write_json(&detail, &report)?;
    outputs.push(detail);
    let manifest = RunManifest::new(
        "diagnose",
        &cfg,
        vec![cfg.seed],
        outputs,
        started.elapsed().as_secs_f64() * 1e3,
    );
    write_json(&dir.join("manifest.json"), &manifest)?;
    for c in &report.checks {
        println!("{}", c.line());
    }
    Ok(())
}
