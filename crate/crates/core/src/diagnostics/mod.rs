//! Closed-form constants of the convergence theorems and empirical checks
//! of their hypotheses and conclusions.

mod checks;

pub use checks::{
    ball_convergence_detect, test_boundedness, test_weak_nonexpansiveness, AcdcHandle, BallReport,
    BoundednessReport, NonexpansiveReport, StochasticDenoiser,
};

use serde::Serialize;

use crate::error::{AcdcError, Result};
use crate::scalar::{to_f64, Real};
use crate::signal::Signal;

/// M_σ ≤ M/(1 + Mσ²), with the regime flag σ² < 1/M.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MtBound {
    pub value: f64,
    pub valid: bool,
}

pub fn mt_bound(m: f64, sigma: f64) -> MtBound {
    MtBound {
        value: m / (1.0 + m * sigma * sigma),
        valid: sigma * sigma * m < 1.0,
    }
}

/// Per-iteration residual constants (ε_k, δ_k) of the AC-DC denoiser.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theorem2 {
    pub eps: f64,
    pub eps_sq: f64,
    /// δ_k² as written; negative when the log(2/ν) term dominates.
    pub delta_sq: f64,
    /// √δ_k², NaN when `delta_sq` < 0.
    pub delta: f64,
    /// δ_k with log(2/ν) clamped at 0.
    pub delta_conservative: f64,
    /// log(2/ν) < 0, i.e. ν > 2.
    pub log_term_negative: bool,
    /// σ_s² + σ² < 1/M.
    pub condition: bool,
}

/// ε_k² = 3((√2 M σ_s²/(1 − σ_s² M))² + σ⁴M²),
/// δ_k² = 3(2σ²(d + 2√(dν) + 2ν) + 32dσ_s²/(1 − Mσ_s²)·log(2/ν)).
///
/// When Mσ_s² ≥ 1 the fractions blow up; ε and δ are then reported as
/// infinite with `condition = false`.
pub fn theorem2_constants(m: f64, sigma: f64, sigma_s: f64, nu: f64, d: usize) -> Result<Theorem2> {
    if !(m > 0.0) || !(sigma >= 0.0) || !(sigma_s >= 0.0) || !(nu > 0.0) || d == 0 {
        return Err(AcdcError::invalid(
            "residual constants need M, ν > 0, σ, σ_s ≥ 0, d ≥ 1",
        ));
    }
    let s2 = sigma * sigma;
    let ss2 = sigma_s * sigma_s;
    let condition = ss2 + s2 < 1.0 / m;
    let log_term = (2.0 / nu).ln();
    let log_term_negative = log_term < 0.0;
    if m * ss2 >= 1.0 {
        return Ok(Theorem2 {
            eps: f64::INFINITY,
            eps_sq: f64::INFINITY,
            delta_sq: f64::INFINITY,
            delta: f64::INFINITY,
            delta_conservative: f64::INFINITY,
            log_term_negative,
            condition,
        });
    }
    let df = d as f64;
    let a = 2f64.sqrt() * m * ss2 / (1.0 - ss2 * m);
    let eps_sq = 3.0 * (a * a + s2 * s2 * m * m);
    let gauss = 2.0 * s2 * (df + 2.0 * (df * nu).sqrt() + 2.0 * nu);
    let lang = 32.0 * df * ss2 / (1.0 - m * ss2);
    let delta_sq = 3.0 * (gauss + lang * log_term);
    let delta_sq_cons = 3.0 * (gauss + lang * log_term.max(0.0));
    Ok(Theorem2 {
        eps: eps_sq.sqrt(),
        eps_sq,
        delta_sq,
        delta: if delta_sq >= 0.0 {
            delta_sq.sqrt()
        } else {
            f64::NAN
        },
        delta_conservative: delta_sq_cons.sqrt(),
        log_term_negative,
        condition,
    })
}

/// Ball-convergence constants for ADMM-PnP with fixed ρ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theorem1 {
    pub eps_bar: f64,
    pub delta_bar: f64,
    /// Radius of the limiting ball; infinite when ε̄ ≥ 1.
    pub r: f64,
    /// ε/(μ(1 + ε − 2ε²)) < 1/ρ.
    pub step_condition: bool,
    pub contraction: bool,
}

/// ε̄ = (ρ + ρε + με + 2με²)/(ρ + μ + 2με), δ̄² = δ²ε̄/ε,
/// r = (1 + ρ/(ρ + μ))·δ̄/√(1 − ε̄²).
pub fn theorem1_ball(eps: f64, delta: f64, mu: f64, rho: f64) -> Result<Theorem1> {
    if !(eps > 0.0 && eps < 1.0) || !(mu > 0.0) || !(rho > 0.0) || !(delta >= 0.0) {
        return Err(AcdcError::invalid(format!(
            "ball radius needs ε in (0, 1), μ, ρ > 0, δ ≥ 0; got ε = {eps}, μ = {mu}, ρ = {rho}, δ = {delta}"
        )));
    }
    let eps_bar = (rho + rho * eps + mu * eps + 2.0 * mu * eps * eps) / (rho + mu + 2.0 * mu * eps);
    let delta_bar = delta * (eps_bar / eps).sqrt();
    let contraction = eps_bar < 1.0;
    let r = if !contraction {
        f64::INFINITY
    } else if delta_bar == 0.0 {
        0.0
    } else {
        (1.0 + rho / (rho + mu)) * delta_bar / (1.0 - eps_bar * eps_bar).sqrt()
    };
    Ok(Theorem1 {
        eps_bar,
        delta_bar,
        r,
        step_condition: eps / (mu * (1.0 + eps - 2.0 * eps * eps)) < 1.0 / rho,
        contraction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Theorem3 {
    pub ck: f64,
    /// c_k with the log(2/ν) term clamped at 0.
    pub ck_conservative: f64,
    pub log_term: f64,
    pub log_term_negative: bool,
    /// σ_s² + σ² < 1/M.
    pub condition: bool,
}

/// c_k = σ²(2 + 4√ν + 4ν) + 16σ_s²/(1 − Mσ_s²)·log(2/ν) + 2σ_s⁴L² + 2σ⁴L².
pub fn theorem3_ck(m: f64, sigma: f64, sigma_s: f64, nu: f64, l: f64) -> Result<Theorem3> {
    if !(m > 0.0) || !(nu > 0.0) || !(sigma >= 0.0) || !(sigma_s >= 0.0) || !(l >= 0.0) {
        return Err(AcdcError::invalid(
            "boundedness constant needs M, ν > 0 and σ, σ_s, L ≥ 0",
        ));
    }
    let s2 = sigma * sigma;
    let ss2 = sigma_s * sigma_s;
    let condition = ss2 + s2 < 1.0 / m;
    let log_term = if m * ss2 < 1.0 {
        16.0 * ss2 / (1.0 - m * ss2) * (2.0 / nu).ln()
    } else {
        f64::INFINITY
    };
    let rest =
        s2 * (2.0 + 4.0 * nu.sqrt() + 4.0 * nu) + 2.0 * ss2 * ss2 * l * l + 2.0 * s2 * s2 * l * l;
    Ok(Theorem3 {
        ck: rest + log_term,
        ck_conservative: rest + log_term.max(0.0),
        log_term,
        log_term_negative: log_term < 0.0,
        condition,
    })
}

/// L = M·D + S: a bound on ‖∇log p‖ over a domain of diameter D containing
/// a point where the score norm is S.
pub fn score_bound_l(m: f64, diameter: f64, s: f64) -> f64 {
    m * diameter + s
}

/// KL(N(m₁, v₁I) ‖ N(m₂, v₂I)) in d dimensions.
pub fn gaussian_kl<T: Real>(m1: &Signal<T>, v1: f64, m2: &Signal<T>, v2: f64) -> Result<f64> {
    m1.ensure_len(m2.len())?;
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(AcdcError::invalid("Gaussian KL needs positive variances"));
    }
    let d = m1.len() as f64;
    let diff = to_f64(m1.dist(m2)).powi(2);
    Ok(0.5 * (d * v1 / v2 + diff / v2 - d + d * (v2 / v1).ln()))
}

pub const PSNR_CAP_DB: f64 = 300.0;

/// (‖est − truth‖²/d, 10 log₁₀(peak²/mse)), PSNR capped at 300 dB.
pub fn psnr_mse<T: Real>(est: &Signal<T>, truth: &Signal<T>, peak: f64) -> Result<(f64, f64)> {
    est.ensure_len(truth.len())?;
    if !(peak > 0.0) {
        return Err(AcdcError::invalid("PSNR peak must be positive"));
    }
    let mse = to_f64(est.dist(truth)).powi(2) / est.len() as f64;
    let psnr = if mse > 0.0 {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    } else {
        PSNR_CAP_DB
    };
    Ok((mse, psnr))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundFlags {
    /// σ_s² + σ² < 1/M.
    pub smoothing_condition: bool,
    /// ε < 1.
    pub eps_below_one: bool,
    /// ε/(μ(1 + ε − 2ε²)) < 1/ρ; absent without a strong-convexity modulus.
    pub step_condition: Option<bool>,
}

/// Every theorem constant evaluated for one (σ, σ_s, ν) operating point.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub k: Option<usize>,
    pub m: f64,
    pub m_analytic: bool,
    pub m_sigma_bound: f64,
    pub sigma: f64,
    pub sigma_s: f64,
    pub nu: f64,
    pub d: usize,
    pub eps: f64,
    /// Verbatim δ; `null` in JSON when δ² < 0.
    pub delta: Option<f64>,
    pub delta_conservative: f64,
    pub mu: Option<f64>,
    pub rho: f64,
    pub eps_bar: Option<f64>,
    pub delta_bar: Option<f64>,
    pub r: Option<f64>,
    pub l: Option<f64>,
    pub ck: Option<f64>,
    pub ck_conservative: Option<f64>,
    pub flags: BoundFlags,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct BoundInputs {
    pub k: Option<usize>,
    pub m: f64,
    pub m_analytic: bool,
    pub sigma: f64,
    pub sigma_s: f64,
    pub nu: f64,
    pub d: usize,
    /// Strong-convexity modulus of ℓ, when known.
    pub mu: Option<f64>,
    pub rho: f64,
    pub l: Option<f64>,
}

impl BoundReport {
    /// The ball radius uses the conservative δ.
    pub fn evaluate(inp: &BoundInputs) -> Result<Self> {
        let t2 = theorem2_constants(inp.m, inp.sigma, inp.sigma_s, inp.nu, inp.d)?;
        let mut notes = Vec::new();
        notes.push(if inp.m_analytic {
            "M exact (single component)".to_string()
        } else {
            "M estimated by Hessian search".to_string()
        });
        if t2.log_term_negative {
            notes.push(format!(
                "log(2/ν) < 0 at ν = {:.4}; conservative variants clamp it at 0",
                inp.nu
            ));
        }
        let t1 = match inp.mu {
            Some(mu) if t2.eps > 0.0 && t2.eps < 1.0 && t2.delta_conservative.is_finite() => {
                Some(theorem1_ball(t2.eps, t2.delta_conservative, mu, inp.rho)?)
            }
            Some(_) => {
                notes.push("ε ∉ (0, 1): no ball radius".into());
                None
            }
            None => {
                notes.push(
                    "ℓ not strongly convex (nonlinear or rank-deficient A): no ball radius".into(),
                );
                None
            }
        };
        let t3 = match inp.l {
            Some(l) => Some(theorem3_ck(inp.m, inp.sigma, inp.sigma_s, inp.nu, l)?),
            None => None,
        };
        let step_condition = match (inp.mu, t2.eps < 1.0) {
            (Some(mu), true) => {
                Some(t2.eps / (mu * (1.0 + t2.eps - 2.0 * t2.eps_sq)) < 1.0 / inp.rho)
            }
            _ => None,
        };
        Ok(Self {
            k: inp.k,
            m: inp.m,
            m_analytic: inp.m_analytic,
            m_sigma_bound: mt_bound(inp.m, inp.sigma).value,
            sigma: inp.sigma,
            sigma_s: inp.sigma_s,
            nu: inp.nu,
            d: inp.d,
            eps: t2.eps,
            delta: t2.delta.is_finite().then_some(t2.delta),
            delta_conservative: t2.delta_conservative,
            mu: inp.mu,
            rho: inp.rho,
            eps_bar: t1.map(|t| t.eps_bar),
            delta_bar: t1.map(|t| t.delta_bar),
            r: t1.and_then(|t| t.r.is_finite().then_some(t.r)),
            l: inp.l,
            ck: t3.map(|t| t.ck),
            ck_conservative: t3.map(|t| t.ck_conservative),
            flags: BoundFlags {
                smoothing_condition: t2.condition,
                eps_below_one: t2.eps < 1.0,
                step_condition,
            },
            notes,
        })
    }
}
