//! Score models with closed forms, the oracle MMSE denoiser, and empirical
//! score diagnostics (sampled smoothness and coercivity).

mod empirical;
mod gmm;

pub use empirical::{
    empirical_coercivity, empirical_smoothness, BoxSampler, CoercivityReport, HistogramBin,
    SmoothnessReport,
};
pub use gmm::{GaussianMixture, SmoothedSampler, SmoothnessEstimate};

use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::signal::Signal;

/// ∇ log p_σ(x) for any smoothing level σ ≥ 0.
pub trait ScoreModel<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn score(&self, x: &Signal<T>, sigma: T) -> Signal<T>;

    /// Global smoothness constant M of ∇ log p_data when one is known.
    fn smoothness(&self) -> Option<T> {
        None
    }
}

/// Draws points from a test domain.
pub trait PointSampler<T: Real> {
    fn sample_point(&self, stream: &mut RandomStream) -> Signal<T>;
}
