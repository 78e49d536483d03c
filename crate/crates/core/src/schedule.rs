//! Per-iteration noise schedule: the annealed smoothing level σ_k, the DC
//! likelihood width σ_{s,k}, the Langevin step η_k, and the confidence
//! exponent ν_k used by the high-probability bounds.

use crate::config::ScheduleConfig;
use crate::error::{AcdcError, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    pub sigma_max: T,
    pub sigma_min: T,
    /// Length W of the linear decay window.
    pub window: usize,
    /// Iterations run at `sigma_min` after the window; K = W + tail.
    pub tail: usize,
    /// DC (Langevin) steps J per denoiser call.
    pub dc_steps: usize,
    /// η_k = eta_coeff · σ_k
    pub eta_coeff: T,
    /// σ_{s,k} = sigma_s_coeff / √σ_k
    pub sigma_s_coeff: T,
    /// Failure probability η ∈ (0, 1] of the uniform-in-k bounds.
    pub eta_prob: T,
}

/// Schedule values at one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSlice<T> {
    pub k: usize,
    pub sigma: T,
    pub sigma_s: T,
    pub eta: T,
    pub dc_steps: usize,
}

impl<T: Real> NoiseSchedule<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma_max: T,
        sigma_min: T,
        window: usize,
        tail: usize,
        dc_steps: usize,
        eta_coeff: T,
        sigma_s_coeff: T,
        eta_prob: T,
    ) -> Result<Self> {
        if !(sigma_min >= T::zero()) || !(sigma_max >= sigma_min) || !sigma_max.is_finite() {
            return Err(AcdcError::invalid(format!(
                "need 0 <= sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        if window == 0 {
            return Err(AcdcError::invalid("decay window W must be positive"));
        }
        if !(eta_coeff > T::zero()) || !(sigma_s_coeff > T::zero()) {
            return Err(AcdcError::invalid(
                "eta_coeff and sigma_s_coeff must be positive",
            ));
        }
        if !(eta_prob > T::zero() && eta_prob <= T::one()) {
            return Err(AcdcError::invalid(format!(
                "eta_prob must lie in (0, 1], got {eta_prob}"
            )));
        }
        if dc_steps > 0 && sigma_min == T::zero() {
            return Err(AcdcError::invalid(
                "DC steps need sigma > 0 (sigma_s = coeff / sqrt(sigma) is undefined at 0)",
            ));
        }
        Ok(Self {
            sigma_max,
            sigma_min,
            window,
            tail,
            dc_steps,
            eta_coeff,
            sigma_s_coeff,
            eta_prob,
        })
    }

    /// Linear 10 → 0.1 decay over `window` iterations, ten tail iterations,
    /// J = 10, η_k = 5e-4 σ_k, σ_{s,k} = 0.1/√σ_k.
    pub fn standard(window: usize) -> Self {
        Self::new(
            lit(10.0),
            lit(0.1),
            window,
            10,
            10,
            lit(5e-4),
            lit(0.1),
            lit(0.05),
        )
        .expect("standard schedule is valid")
    }

    /// Constant (σ, σ_s, η) for `iters` iterations.
    /// σ = 0 is accepted only without DC steps; σ_s and η are then ignored.
    pub fn frozen(sigma: T, sigma_s: T, eta: T, dc_steps: usize, iters: usize) -> Result<Self> {
        if iters == 0 {
            return Err(AcdcError::invalid(
                "frozen schedule needs at least one iteration",
            ));
        }
        if sigma == T::zero() && dc_steps == 0 {
            return Self::new(
                T::zero(),
                T::zero(),
                1,
                iters - 1,
                0,
                T::one(),
                T::one(),
                lit(0.05),
            );
        }
        if !(sigma > T::zero()) || !(sigma_s > T::zero()) || !(eta > T::zero()) {
            return Err(AcdcError::invalid(
                "frozen schedule needs positive sigma, sigma_s, eta",
            ));
        }
        Self::new(
            sigma,
            sigma,
            1,
            iters - 1,
            dc_steps,
            eta / sigma,
            sigma_s * sigma.sqrt(),
            lit(0.05),
        )
    }

    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        Self::new(
            lit(cfg.sigma_max),
            lit(cfg.sigma_min),
            cfg.window,
            cfg.tail,
            cfg.dc_steps,
            lit(cfg.eta_coeff),
            lit(cfg.sigma_s_coeff),
            lit(cfg.eta_prob),
        )
    }

    /// K = W + tail.
    pub fn max_iters(&self) -> usize {
        self.window + self.tail
    }

    pub fn sigma_at(&self, k: usize) -> T {
        let frac = from_usize::<T>(k) / from_usize::<T>(self.window);
        let s = self.sigma_max - (self.sigma_max - self.sigma_min) * frac;
        s.max(self.sigma_min)
    }

    /// (σ_k, σ_{s,k}, η_k). At σ = 0 the DC quantities are reported as 0.
    pub fn schedule_at(&self, k: usize) -> Result<ScheduleSlice<T>> {
        let max = self.max_iters();
        if k > max {
            return Err(AcdcError::ScheduleOutOfRange { k, max });
        }
        let sigma = self.sigma_at(k);
        let (sigma_s, eta) = if sigma > T::zero() {
            (self.sigma_s_coeff / sigma.sqrt(), self.eta_coeff * sigma)
        } else {
            (T::zero(), T::zero())
        };
        Ok(ScheduleSlice {
            k,
            sigma,
            sigma_s,
            eta,
            dc_steps: self.dc_steps,
        })
    }

    pub fn nu_at(&self, k: usize) -> Result<T> {
        nu(self.eta_prob, k)
    }
}

/// ν_k = ln(2π²/(6η)) + 2 ln k.
///
/// The ζ(2) = π²/6 union bound over k is what makes the per-iteration
/// probabilities 2e^{-ν_k} sum to η.
pub fn nu<T: Real>(eta_prob: T, k: usize) -> Result<T> {
    if k == 0 {
        return Err(AcdcError::invalid("nu_k is undefined at k = 0"));
    }
    if !(eta_prob > T::zero() && eta_prob <= lit(std::f64::consts::PI.powi(2) / 3.0 + 1e-12)) {
        return Err(AcdcError::invalid(format!(
            "eta_prob out of range: {eta_prob}"
        )));
    }
    let two_pi_sq = lit::<T>(2.0) * T::PI() * T::PI();
    Ok((two_pi_sq / (lit::<T>(6.0) * eta_prob)).ln() + lit::<T>(2.0) * from_usize::<T>(k).ln())
}
