use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use acdc_core::config::ExperimentConfig;
use log::warn;
use rayon::prelude::*;

use crate::args::SweepArgs;
use crate::commands::solve_into;
use crate::error::{CliError, CliResult};
use crate::output::{load_config, out_dir, write_atomic, write_json, RunManifest};

pub const RUNS_HEADER: &str = "value,seed,status,iterations,mse,psnr,final_beta,final_rho";
pub const SWEEP_HEADER: &str =
    "param,value,runs,failed,mse_mean,mse_std,psnr_mean,psnr_std,beta_mean,beta_std";

struct Job {
    value_index: usize,
    cfg: ExperimentConfig,
    dir: PathBuf,
}

struct Outcome {
    value_index: usize,
    seed: u64,
    dir: PathBuf,
    result: CliResult<acdc_core::experiment::RunSummary>,
}

/// Directory-safe form of a value.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run(args: &SweepArgs) -> CliResult<()> {
    let started = Instant::now();
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    // Every value's config is resolved before any run starts or any file is
    // written.
    let base = load_config(&args.run, &[])?;
    let root = out_dir(&args.run, &base);
    let mut configs = Vec::with_capacity(args.values.len());
    for v in &args.values {
        configs.push(load_config(&args.run, &[format!("{}={v}", args.param)])?);
    }
    let mut jobs = Vec::new();
    for (i, (v, cfg)) in args.values.iter().zip(&configs).enumerate() {
        for j in 0..args.seeds {
            let mut cfg = cfg.clone();
            cfg.seed = base.seed.wrapping_add(j);
            let dir = root
                .join(format!("{}={}", slug(&args.param), slug(v)))
                .join(format!("seed_{}", cfg.seed));
            jobs.push(Job {
                value_index: i,
                cfg,
                dir,
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let timing = args.run.timing;
    let outcomes: Vec<Outcome> = pool.install(|| {
        jobs.par_iter()
            .map(|job| Outcome {
                value_index: job.value_index,
                seed: job.cfg.seed,
                dir: job.dir.clone(),
                result: solve_into(&job.cfg, &job.dir, timing).map(|(s, _)| s),
            })
            .collect()
    });

    let runs_path = root.join("runs.csv");
    let sweep_path = root.join("sweep.csv");
    write_atomic(&runs_path, |buf| {
        writeln!(buf, "{RUNS_HEADER}")?;
        for o in &outcomes {
            let v = &args.values[o.value_index];
            match &o.result {
                Ok(s) => writeln!(
                    buf,
                    "{v},{},ok,{},{},{},{},{}",
                    o.seed, s.iterations, s.mse, s.psnr, s.final_beta, s.final_rho
                )?,
                Err(e) => {
                    let status = match e {
                        CliError::Divergence { k, .. } => format!("diverged@{k}"),
                        _ => "error".to_string(),
                    };
                    writeln!(buf, "{v},{},{status},,,,,", o.seed)?
                }
            }
        }
        Ok(())
    })?;
    write_atomic(&sweep_path, |buf| {
        writeln!(buf, "{SWEEP_HEADER}")?;
        for (i, v) in args.values.iter().enumerate() {
            let ok: Vec<_> = outcomes
                .iter()
                .filter(|o| o.value_index == i)
                .filter_map(|o| o.result.as_ref().ok())
                .collect();
            let failed = args.seeds as usize - ok.len();
            let (mm, ms) = mean_std(&ok.iter().map(|s| s.mse).collect::<Vec<_>>());
            let (pm, ps) = mean_std(&ok.iter().map(|s| s.psnr).collect::<Vec<_>>());
            let (bm, bs) = mean_std(&ok.iter().map(|s| s.final_beta).collect::<Vec<_>>());
            writeln!(
                buf,
                "{},{v},{},{failed},{mm},{ms},{pm},{ps},{bm},{bs}",
                args.param,
                ok.len()
            )?;
        }
        Ok(())
    })?;

    let mut failures = 0;
    let mut first_error = None;
    for o in outcomes.iter().filter(|o| o.result.is_err()) {
        failures += 1;
        warn!(
            "run {} seed {} failed: {}",
            args.values[o.value_index],
            o.seed,
            o.result
                .as_ref()
                .err()
                .map(|e| e.to_string())
                .unwrap_or_default()
        );
    }
    let mut outputs: Vec<PathBuf> = vec![sweep_path.clone(), runs_path];
    let mut seeds = Vec::new();
    for o in outcomes {
        if !seeds.contains(&o.seed) {
            seeds.push(o.seed);
        }
        match o.result {
            Ok(_) => {
                outputs.extend(["trace.csv", "bounds.json", "summary.json"].map(|f| o.dir.join(f)))
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let manifest = RunManifest::new(
        "sweep",
        &base,
        seeds,
        outputs,
        started.elapsed().as_secs_f64() * 1e3,
    );
    write_json(&root.join("manifest.json"), &manifest)?;
    println!(
        "sweep {} over {} values x {} seeds: {} failed; aggregate in {}",
        args.param,
        args.values.len(),
        args.seeds,
        failures,
        sweep_path.display()
    );
    match first_error {
        Some(e) if failures == jobs.len() => Err(e),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m, 2.5);
        assert_relative_eq!(s, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("schedule.J"), "schedule.J");
        assert_eq!(slug("[1, 2]"), "_1__2_");
        assert_eq!(slug("a/b"), "a_b");
    }
}
