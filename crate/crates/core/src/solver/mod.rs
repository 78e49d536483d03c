//! Outer iterations: ADMM-PnP with the AC-DC denoiser (fixed or adaptive ρ),
//! and the DiffPIR-style splitting and SNORE baselines.

mod admm;
mod baselines;
mod trace;

pub use admm::admm_pnp_solve;
pub use baselines::{diffpir_solve, snore_solve};
pub use trace::{read_trace_csv, write_trace_csv, IterationRecord, TRACE_HEADER};

use crate::config::{ExperimentConfig, Method};
use crate::denoiser::DenoiserConfig;
use crate::error::{AcdcError, Result};
use crate::operators::InnerSettings;
use crate::rng::{labels, RandomStream};
use crate::scalar::{from_usize, lit, Real};
use crate::schedule::NoiseSchedule;
use crate::signal::Signal;

/// ρ ← γρ when β_new ≥ η_β β_old, else unchanged.
pub fn adapt_rho<T: Real>(beta_new: T, beta_old: T, rho: T, gamma: T, eta_beta: T) -> T {
    if beta_new >= eta_beta * beta_old {
        gamma * rho
    } else {
        rho
    }
}

#[derive(Clone, Debug)]
pub struct SolverState<T> {
    pub x: Signal<T>,
    pub z: Signal<T>,
    pub u: Signal<T>,
    pub rho: T,
    pub k: usize,
    pub beta: Option<T>,
}

/// β = (‖Δx‖ + ‖Δz‖ + ‖Δu‖)/√d.
pub fn relative_residue<T: Real>(state: &SolverState<T>, prev: &SolverState<T>) -> Result<T> {
    let d = state.x.len();
    for s in [&state.z, &state.u, &prev.x, &prev.z, &prev.u] {
        s.ensure_len(d)?;
    }
    let total = state.x.dist(&prev.x) + state.z.dist(&prev.z) + state.u.dist(&prev.u);
    Ok(total / from_usize::<T>(d).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveRho {
    pub gamma: f64,
    pub eta_beta: f64,
}

impl AdaptiveRho {
    pub fn new(gamma: f64, eta_beta: f64) -> Result<Self> {
        if !(gamma > 1.0) || !(0.0..1.0).contains(&eta_beta) {
            return Err(AcdcError::invalid(format!(
                "adaptive ρ needs γ_ρ > 1 and η_β in [0, 1), got {gamma}, {eta_beta}"
            )));
        }
        Ok(Self { gamma, eta_beta })
    }
}

impl Default for AdaptiveRho {
    fn default() -> Self {
        Self {
            gamma: 1.2,
            eta_beta: 0.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions<T: Real> {
    pub schedule: NoiseSchedule<T>,
    /// Initial (or fixed) penalty.
    pub rho: T,
    pub adaptive: Option<AdaptiveRho>,
    pub inner: InnerSettings,
    pub denoiser: DenoiserConfig,
    /// Starting point; defaults to the operator's back-projection of y.
    pub init: Option<Signal<T>>,
    /// Keep (x, z, u) of every iteration.
    pub record_iterates: bool,
    /// Fill the `ms` trace column with wall time; otherwise it stays 0 so
    /// traces are reproducible byte for byte.
    pub timing: bool,
    /// DiffPIR noise-mixing coefficient.
    pub zeta: T,
    /// DiffPIR coupling weight; `rho` when unset.
    pub mu_hqs: Option<T>,
    /// SNORE data step δ.
    pub snore_step: T,
    /// SNORE regulariser step.
    pub snore_reg: T,
}

impl<T: Real> SolveOptions<T> {
    pub fn new(schedule: NoiseSchedule<T>, rho: T) -> Self {
        Self {
            schedule,
            rho,
            adaptive: None,
            inner: InnerSettings::default(),
            denoiser: DenoiserConfig::default(),
            init: None,
            record_iterates: false,
            timing: false,
            zeta: lit(0.3),
            mu_hqs: None,
            snore_step: lit(1e-3),
            snore_reg: lit(0.5),
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let s = &cfg.solver;
        let mut o = Self::new(NoiseSchedule::from_config(&cfg.schedule)?, lit(s.rho));
        o.adaptive = if s.adaptive_rho {
            Some(AdaptiveRho::new(s.gamma_rho, s.eta_beta)?)
        } else {
            None
        };
        o.inner = (&s.inner).into();
        o.denoiser = DenoiserConfig::from_solver(s);
        o.zeta = lit(s.zeta);
        o.mu_hqs = s.mu_hqs.map(lit);
        o.snore_step = lit(s.snore_step);
        o.snore_reg = lit(s.snore_reg);
        Ok(o)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.rho > T::zero()) || !self.rho.is_finite() {
            return Err(AcdcError::invalid(format!(
                "ρ must be positive, got {}",
                self.rho
            )));
        }
        if !(self.zeta >= T::zero() && self.zeta <= T::one()) {
            return Err(AcdcError::invalid("ζ must lie in [0, 1]"));
        }
        self.denoiser.validate()
    }
}

/// Independent noise sources for one solve. AC and DC noise are separate so
/// that runs differing only in J see the same AC draws.
#[derive(Clone, Debug)]
pub struct SolverStreams {
    pub ac: RandomStream,
    pub dc: RandomStream,
    pub baseline: RandomStream,
}

impl SolverStreams {
    pub fn from_seed(seed: u64) -> Self {
        let root = RandomStream::new(seed);
        Self {
            ac: root.substream(labels::AC_NOISE),
            dc: root.substream(labels::DC_NOISE),
            baseline: root.substream(labels::BASELINE_NOISE),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Iterate<T> {
    pub x: Signal<T>,
    pub z: Signal<T>,
    pub u: Signal<T>,
}

#[derive(Clone, Debug)]
pub struct SolveOutput<T> {
    pub method: Method,
    /// z for the splitting methods, x for SNORE.
    pub estimate: Signal<T>,
    pub state: SolverState<T>,
    pub trace: Vec<IterationRecord>,
    pub iterates: Option<Vec<Iterate<T>>>,
    pub rho_increases: usize,
    /// Iterations whose DC stage ran outside σ_s² < 1/M_σ.
    pub dc_condition_violations: usize,
}

impl<T: Real> SolveOutput<T> {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.trace.last()
    }

    /// First iteration whose β dropped below `tol`.
    pub fn first_beta_below(&self, tol: f64) -> Option<usize> {
        self.trace.iter().find(|r| r.beta < tol).map(|r| r.k)
    }
}

pub(crate) fn mse_against<T: Real>(est: &Signal<T>, truth: Option<&Signal<T>>) -> Option<f64> {
    truth.map(|t| crate::scalar::to_f64(est.dist(t).powi(2)) / est.len() as f64)
}
