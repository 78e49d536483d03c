use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use acdc_core::config::ExperimentConfig;
use acdc_core::priors::{CoercivityReport, SmoothnessReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::RunArgs;
use crate::error::{CliError, CliResult};

pub const SMOOTHNESS_HEADER: &str = "pair,ratio";
pub const COERCIVITY_HEADER: &str = "norm_sq,inner";

/// Reads, overrides and validates the config. Nothing is written before
/// this succeeds, so a bad config never leaves partial output behind.
pub fn load_config(args: &RunArgs, extra: &[String]) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Read {
        path: args.config.clone(),
        source,
    })?;
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    let mut cfg = ExperimentConfig::from_json_with_overrides(&text, &overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    args.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output))
}

/// Hex SHA-256 of the resolved config's canonical JSON.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialises");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes through a sibling temp file and renames, so readers never see a
/// half-written file.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::io(path, e))?;
    let tmp = path.with_extension("tmp");
    let res = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&buf).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    write_atomic(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

pub fn write_smoothness_csv(path: &Path, rep: &SmoothnessReport) -> CliResult<()> {
    write_atomic(path, |buf| {
        writeln!(buf, "{SMOOTHNESS_HEADER}")?;
        for (i, r) in rep.ratios.iter().enumerate() {
            writeln!(buf, "{i},{r}")?;
        }
        Ok(())
    })
}

pub fn write_coercivity_csv(path: &Path, rep: &CoercivityReport) -> CliResult<()> {
    write_atomic(path, |buf| {
        writeln!(buf, "{COERCIVITY_HEADER}")?;
        for (a, b) in &rep.pairs {
            writeln!(buf, "{a},{b}")?;
        }
        Ok(())
    })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub version: String,
    pub wall_clock_ms: f64,
}

impl RunManifest {
    pub fn new(
        command: &str,
        cfg: &ExperimentConfig,
        seeds: Vec<u64>,
        outputs: Vec<PathBuf>,
        ms: f64,
    ) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(cfg),
            seeds,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_ms: ms,
        }
    }
}
