use thiserror::Error;

pub type Result<T, E = AcdcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AcdcError {
    #[error("signal must have at least one entry")]
    EmptySignal,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("iteration index {k} outside schedule range 0..={max}")]
    ScheduleOutOfRange { k: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{stage} diverged at step {step}")]
    Divergence { stage: &'static str, step: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("iteration {k}: {source}")]
    Iteration {
        k: usize,
        #[source]
        source: Box<AcdcError>,
    },

    #[error("config: {0}")]
    Config(String),
}

impl AcdcError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        AcdcError::InvalidParameter(msg.into())
    }

    pub(crate) fn at_iteration(self, k: usize) -> Self {
        AcdcError::Iteration {
            k,
            source: Box::new(self),
        }
    }

    /// Iteration index of a divergence, looking through iteration context.
    pub fn divergence_iteration(&self) -> Option<usize> {
        match self {
            AcdcError::Iteration { k, source } => match source.as_ref() {
                AcdcError::Divergence { .. } | AcdcError::NonFinite(_) => Some(*k),
                other => other.divergence_iteration(),
            },
            AcdcError::Divergence { step, .. } => Some(*step),
            _ => None,
        }
    }
}
