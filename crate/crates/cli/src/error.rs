use std::path::PathBuf;

use acdc_core::config::ParseError;
use acdc_core::AcdcError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("solver diverged at iteration {k}: {}", innermost(.source))]
    Divergence { k: usize, source: AcdcError },
    #[error("{0}")]
    Core(AcdcError),
    #[error("{0}")]
    Usage(String),
}

impl From<AcdcError> for CliError {
    fn from(e: AcdcError) -> Self {
        match e.divergence_iteration() {
            Some(k) => CliError::Divergence { k, source: e },
            None => CliError::Core(e),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Core(AcdcError::Config(_)) | CliError::Usage(_) => 2,
            CliError::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

fn innermost(e: &AcdcError) -> &AcdcError {
    match e {
        AcdcError::Iteration { source, .. } => innermost(source),
        other => other,
    }
}

pub type CliResult<T> = Result<T, CliError>;
