use serde::Serialize;

use super::{PointSampler, ScoreModel};
use crate::rng::RandomStream;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::signal::Signal;

#[derive(Clone, Debug, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Sampled Lipschitz ratios ‖s(x₁) − s(x₂)‖ / ‖x₁ − x₂‖ of a score at one σ.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub sigma: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub histogram: Vec<HistogramBin>,
    /// Global constant M of log p_data, when known.
    pub m: Option<f64>,
    /// M/(1 + Mσ²).
    pub m_sigma_bound: Option<f64>,
    /// σ² < 1/M, the regime where the bound applies.
    pub bound_valid: bool,
}

impl SmoothnessReport {
    /// `true` when the bound applies and every sampled ratio respects it up
    /// to the relative slack `rel_tol`.
    pub fn within_bound(&self, rel_tol: f64) -> Option<bool> {
        let b = self.m_sigma_bound?;
        if !self.bound_valid {
            return None;
        }
        Some(self.max_ratio <= b * (1.0 + rel_tol))
    }
}

const HISTOGRAM_BINS: usize = 20;

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let width = if max > 0.0 {
        max / HISTOGRAM_BINS as f64
    } else {
        1.0
    };
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = ((v / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[idx].count += 1;
    }
    bins
}

/// Samples `n_pairs` point pairs and records the score's Lipschitz ratio.
///
/// Even-indexed pairs are two independent domain draws; odd-indexed pairs
/// perturb one draw by a random direction with radius log-uniform in
/// [1e-3, 1], which probes the local (Hessian-scale) constant. Coincident
/// pairs are redrawn.
pub fn empirical_smoothness<T: Real>(
    model: &dyn ScoreModel<T>,
    sigma: T,
    n_pairs: usize,
    sampler: &dyn PointSampler<T>,
    stream: &mut RandomStream,
) -> SmoothnessReport {
    assert!(n_pairs >= 1, "need at least one pair");
    let mut ratios = Vec::with_capacity(n_pairs);
    while ratios.len() < n_pairs {
        let x1 = sampler.sample_point(stream);
        let x2 = if ratios.len() % 2 == 0 {
            sampler.sample_point(stream)
        } else {
            let dir: Signal<T> = stream.normal_signal(x1.len());
            let n = dir.norm();
            if !(n > T::zero()) {
                continue;
            }
            let radius = 10f64.powf(-3.0 * stream.uniform());
            let mut x2 = x1.clone();
            x2.axpy(lit::<T>(radius) / n, &dir);
            x2
        };
        let dx = x1.dist(&x2);
        if !(dx > T::zero()) {
            continue;
        }
        let ds = model.score(&x1, sigma).dist(&model.score(&x2, sigma));
        ratios.push(to_f64(ds / dx));
    }
    let max_ratio = ratios.iter().copied().fold(0.0f64, f64::max);
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let m = model.smoothness().map(to_f64);
    let s2 = to_f64(sigma * sigma);
    SmoothnessReport {
        sigma: to_f64(sigma),
        histogram: histogram(&ratios),
        ratios,
        max_ratio,
        mean_ratio,
        m,
        m_sigma_bound: m.map(|m| m / (1.0 + m * s2)),
        bound_valid: m.map(|m| s2 < 1.0 / m).unwrap_or(false),
    }
}

/// (‖c x‖², ⟨c x, −∇log p(c x)⟩) over every scale c and base point x.
#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    pub scales: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares slope of inner product against squared norm, fitted
    /// through the origin.
    pub slope: f64,
}

pub fn empirical_coercivity<T: Real>(
    model: &dyn ScoreModel<T>,
    scales: &[T],
    base_points: &[Signal<T>],
) -> CoercivityReport {
    assert!(!scales.is_empty(), "need at least one scale");
    let mut pairs = Vec::with_capacity(scales.len() * base_points.len());
    for x in base_points {
        for &c in scales {
            let cx = x.scale(c);
            let s = model.score(&cx, T::zero());
            pairs.push((to_f64(cx.norm_sq()), -to_f64(cx.dot(&s))));
        }
    }
    let sxx: f64 = pairs.iter().map(|(a, _)| a * a).sum();
    let sxy: f64 = pairs.iter().map(|(a, b)| a * b).sum();
    CoercivityReport {
        scales: scales.iter().map(|&c| to_f64(c)).collect(),
        slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
        pairs,
    }
}

/// Uniform draws from the box `center ± half_width`.
#[derive(Clone, Debug)]
pub struct BoxSampler<T> {
    pub center: Signal<T>,
    pub half_width: T,
}

impl<T: Real> PointSampler<T> for BoxSampler<T> {
    fn sample_point(&self, stream: &mut RandomStream) -> Signal<T> {
        let two: T = from_usize(2);
        self.center
            .map(|c| c + self.half_width * (two * lit::<T>(stream.uniform()) - T::one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{GaussianMixture, SmoothedSampler};
    use approx::assert_relative_eq;

    fn unit_gaussian(d: usize) -> GaussianMixture<f64> {
        GaussianMixture::gaussian(Signal::zeros(d), 1.0).unwrap()
    }

    #[test]
    fn linear_score_has_constant_ratio() {
        let g = unit_gaussian(3);
        let mut stream = RandomStream::new(1);
        let sampler = SmoothedSampler {
            prior: &g,
            sigma: 0.5,
        };
        let rep = empirical_smoothness(&g, 0.5, 200, &sampler, &mut stream);
        for r in &rep.ratios {
            assert_relative_eq!(*r, 0.8, epsilon = 1e-12);
        }
        assert_relative_eq!(rep.m_sigma_bound.unwrap(), 0.8, epsilon = 1e-15);
        assert_eq!(rep.within_bound(1e-9), Some(true));

        let rep0 = empirical_smoothness(&g, 0.0, 50, &g, &mut stream);
        assert_relative_eq!(rep0.max_ratio, 1.0, epsilon = 1e-12);
        assert_eq!(rep0.m, Some(1.0));
        assert_eq!(rep0.histogram.iter().map(|b| b.count).sum::<usize>(), 50);
    }

    #[test]
    fn coercivity_of_standard_gaussian() {
        let g = unit_gaussian(4);
        let mut stream = RandomStream::new(2);
        let base: Vec<Signal<f64>> = (0..5)
            .map(|_| g.sample(&mut stream))
            .chain([Signal::zeros(4)])
            .collect();
        let rep = empirical_coercivity(&g, &[1.0, 1.5, 2.0, 3.0], &base);
        assert_eq!(rep.pairs.len(), 24);
        for (n2, ip) in &rep.pairs {
            assert_relative_eq!(*n2, *ip, epsilon = 1e-12);
        }
        assert_eq!(*rep.pairs.last().unwrap(), (0.0, 0.0));
        assert_relative_eq!(rep.slope, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn box_sampler_stays_in_box() {
        let b = BoxSampler {
            center: Signal::<f64>::new(vec![1.0, -1.0]).unwrap(),
            half_width: 0.5,
        };
        let mut s = RandomStream::new(3);
        for _ in 0..100 {
            let p = b.sample_point(&mut s);
            assert!((p[0] - 1.0).abs() <= 0.5 && (p[1] + 1.0).abs() <= 0.5);
        }
    }
}
