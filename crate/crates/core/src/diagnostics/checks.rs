use serde::Serialize;

use crate::denoiser::{acdc_denoise, DenoiserConfig};
use crate::error::{AcdcError, Result};
use crate::priors::{PointSampler, ScoreModel};
use crate::rng::RandomStream;
use crate::scalar::{to_f64, Real};
use crate::schedule::ScheduleSlice;
use crate::signal::Signal;

/// A denoiser D whose output may depend on fresh noise.
pub trait StochasticDenoiser<T: Real> {
    fn denoise(&self, x: &Signal<T>, stream: &mut RandomStream) -> Result<Signal<T>>;
}

impl<T: Real, F> StochasticDenoiser<T> for F
where
    F: Fn(&Signal<T>, &mut RandomStream) -> Result<Signal<T>>,
{
    fn denoise(&self, x: &Signal<T>, stream: &mut RandomStream) -> Result<Signal<T>> {
        self(x, stream)
    }
}

/// The AC-DC denoiser frozen at one schedule slice.
pub struct AcdcHandle<'a, T: Real> {
    pub model: &'a dyn ScoreModel<T>,
    pub slice: ScheduleSlice<T>,
    pub config: DenoiserConfig,
}

impl<T: Real> StochasticDenoiser<T> for AcdcHandle<'_, T> {
    fn denoise(&self, x: &Signal<T>, stream: &mut RandomStream) -> Result<Signal<T>> {
        let mut ac = stream.fork();
        let mut dc = stream.fork();
        acdc_denoise(x, self.model, &self.slice, &self.config, &mut ac, &mut dc).map(|(z, _)| z)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NonexpansiveReport {
    pub n_pairs: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// 2e^(−ν).
    pub ceiling: f64,
    pub eps: f64,
    pub delta: f64,
    pub nu: f64,
    /// Largest ‖R(x) − R(y)‖² − ε²‖x − y‖² seen.
    pub max_excess: f64,
}

impl NonexpansiveReport {
    /// violation_rate ≤ 2e^(−ν) + slack.
    pub fn passes(&self, slack: f64) -> bool {
        self.violation_rate <= self.ceiling + slack
    }
}

fn residual<T: Real>(
    den: &dyn StochasticDenoiser<T>,
    x: &Signal<T>,
    stream: &mut RandomStream,
) -> Result<Signal<T>> {
    Ok(&den.denoise(x, stream)? - x)
}

/// Fraction of sampled pairs violating ‖R(x) − R(y)‖² ≤ ε²‖x − y‖² + δ²
/// with R = D − I. Each point gets its own denoiser noise.
pub fn test_weak_nonexpansiveness<T: Real>(
    den: &dyn StochasticDenoiser<T>,
    eps: f64,
    delta: f64,
    nu: f64,
    n_pairs: usize,
    sampler: &dyn PointSampler<T>,
    stream: &mut RandomStream,
) -> Result<NonexpansiveReport> {
    if n_pairs < 100 {
        return Err(AcdcError::invalid(format!(
            "need at least 100 pairs, got {n_pairs}"
        )));
    }
    let mut violations = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..n_pairs {
        let x = sampler.sample_point(stream);
        let y = sampler.sample_point(stream);
        let rx = residual(den, &x, stream)?;
        let ry = residual(den, &y, stream)?;
        let lhs = to_f64(rx.dist(&ry)).powi(2);
        let base = eps * eps * to_f64(x.dist(&y)).powi(2);
        max_excess = max_excess.max(lhs - base);
        if lhs > base + delta * delta {
            violations += 1;
        }
    }
    Ok(NonexpansiveReport {
        n_pairs,
        violations,
        violation_rate: violations as f64 / n_pairs as f64,
        ceiling: 2.0 * (-nu).exp(),
        eps,
        delta,
        nu,
        max_excess,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundednessReport {
    pub n_points: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub ck: f64,
    /// Largest (1/d)‖D(x) − x‖² seen.
    pub max_value: f64,
    pub mean_value: f64,
}

/// Fraction of sampled points with (1/d)‖D(x) − x‖² > c_k².
pub fn test_boundedness<T: Real>(
    den: &dyn StochasticDenoiser<T>,
    ck: f64,
    n_points: usize,
    sampler: &dyn PointSampler<T>,
    stream: &mut RandomStream,
) -> Result<BoundednessReport> {
    if n_points == 0 {
        return Err(AcdcError::invalid("need at least one point"));
    }
    let mut values = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let x = sampler.sample_point(stream);
        let r = residual(den, &x, stream)?;
        values.push(to_f64(r.norm_sq()) / x.len() as f64);
    }
    let violations = values.iter().filter(|&&v| v > ck * ck).count();
    Ok(BoundednessReport {
        n_points,
        violations,
        violation_rate: violations as f64 / n_points as f64,
        ck,
        max_value: values.iter().copied().fold(0.0, f64::max),
        mean_value: values.iter().sum::<f64>() / n_points as f64,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BallReport {
    pub tail: usize,
    pub tail_diameter: f64,
    pub r: f64,
    /// tail_diameter ≤ 2r.
    pub converged: bool,
}

/// Largest pairwise distance among the last `tail` iterates, compared with
/// the ball diameter 2r.
pub fn ball_convergence_detect<T: Real>(
    trace: &[Signal<T>],
    tail: usize,
    r: f64,
) -> Result<BallReport> {
    if tail == 0 || trace.len() <= tail {
        return Err(AcdcError::invalid(format!(
            "trace of length {} too short for a tail of {tail}",
            trace.len()
        )));
    }
    let pts = &trace[trace.len() - tail..];
    let mut diam = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            diam = diam.max(to_f64(a.dist(b)));
        }
    }
    Ok(BallReport {
        tail,
        tail_diameter: diam,
        r,
        // Relative slack absorbs rounding for points exactly on the sphere.
        converged: diam.is_finite() && diam <= 2.0 * r * (1.0 + 1e-12),
    })
}
