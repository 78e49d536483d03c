//! ADMM plug-and-play restoration with the auto-correction / directional-correction
//! (AC-DC) score denoiser, over analytic Gaussian-mixture priors.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod denoiser;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod operators;
pub mod priors;
pub mod rng;
pub mod scalar;
pub mod schedule;
pub mod signal;
pub mod solver;

pub use error::{AcdcError, Result};
pub use priors::{GaussianMixture, ScoreModel};
pub use rng::RandomStream;
pub use scalar::Real;
pub use schedule::{NoiseSchedule, ScheduleSlice};
pub use signal::Signal;

/// Double-precision aliases for the common case.
pub type Signal64 = Signal<f64>;
pub type Gmm64 = GaussianMixture<f64>;
pub type Schedule64 = NoiseSchedule<f64>;
