use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{PointSampler, ScoreModel};
use crate::config::PriorConfig;
use crate::error::{AcdcError, Result};
use crate::rng::RandomStream;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::signal::Signal;

/// Isotropic Gaussian mixture Σ w_i N(μ_i, s_i² I).
///
/// Smoothing by N(0, σ² I) keeps the family closed: p_σ is the same mixture
/// with variances s_i² + σ², so score, density and posterior mean are exact.
#[derive(Clone, Debug)]
pub struct GaussianMixture<T> {
    weights: Vec<T>,
    means: Vec<Signal<T>>,
    stds: Vec<T>,
    smoothness: OnceLock<SmoothnessEstimate<T>>,
}

/// Global smoothness constant M of ∇ log p_data with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothnessEstimate<T> {
    pub value: T,
    /// `true` for a single component (M = 1/s² exactly).
    pub analytic: bool,
    /// Points at which the Hessian norm was evaluated (0 when analytic).
    pub points_evaluated: usize,
    pub note: String,
}

impl<T: Real> GaussianMixture<T> {
    pub fn new(weights: Vec<T>, means: Vec<Signal<T>>, stds: Vec<T>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || stds.len() != m {
            return Err(AcdcError::invalid(
                "mixture needs equally many (>= 1) weights, means and stds",
            ));
        }
        let d = means[0].len();
        if let Some(mu) = means.iter().find(|mu| mu.len() != d) {
            return Err(AcdcError::DimensionMismatch {
                expected: d,
                found: mu.len(),
            });
        }
        if weights.iter().any(|w| !(*w > T::zero())) {
            return Err(AcdcError::invalid("mixture weights must be positive"));
        }
        if stds.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(AcdcError::invalid("component stds must be positive"));
        }
        let total: T = weights.iter().copied().sum();
        if (to_f64(total) - 1.0).abs() > 1e-12f64.max(8.0 * to_f64(T::epsilon())) {
            return Err(AcdcError::invalid(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            weights,
            means,
            stds,
            smoothness: OnceLock::new(),
        })
    }

    /// Normalises the weights before validating.
    pub fn normalized(weights: Vec<T>, means: Vec<Signal<T>>, stds: Vec<T>) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(AcdcError::invalid("mixture weights must be positive"));
        }
        Self::new(
            weights.into_iter().map(|w| w / total).collect(),
            means,
            stds,
        )
    }

    pub fn gaussian(mean: Signal<T>, std: T) -> Result<Self> {
        Self::new(vec![T::one()], vec![mean], vec![std])
    }

    pub fn from_config(cfg: &PriorConfig) -> Result<Self> {
        let means = cfg
            .means
            .iter()
            .map(|m| Signal::from_f64(m))
            .collect::<Result<Vec<_>>>()?;
        Self::normalized(
            cfg.weights.iter().map(|&w| lit(w)).collect(),
            means,
            cfg.stds.iter().map(|&s| lit(s)).collect(),
        )
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Signal<T>] {
        &self.means
    }

    pub fn stds(&self) -> &[T] {
        &self.stds
    }

    /// Σ w_i μ_i
    pub fn mean(&self) -> Signal<T> {
        let mut acc = Signal::zeros(self.dim());
        for (w, mu) in self.weights.iter().zip(&self.means) {
            acc.axpy(*w, mu);
        }
        acc
    }

    fn variance(&self, i: usize, sigma: T) -> T {
        self.stds[i] * self.stds[i] + sigma * sigma
    }

    fn log_joint(&self, x: &Signal<T>, sigma: T) -> Vec<T> {
        let half_d = from_usize::<T>(self.dim()) * lit(0.5);
        let two_pi = lit::<T>(2.0) * T::PI();
        (0..self.components())
            .map(|i| {
                let v = self.variance(i, sigma);
                let r2 = x
                    .zip_map(&self.means[i], |a, b| (a - b) * (a - b))
                    .iter()
                    .copied()
                    .sum::<T>();
                self.weights[i].ln() - r2 / (lit::<T>(2.0) * v) - half_d * (two_pi * v).ln()
            })
            .collect()
    }

    fn log_sum_exp(values: &[T]) -> T {
        let max = values.iter().copied().fold(T::neg_infinity(), T::max);
        max + values.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
    }

    /// log p_σ(x).
    pub fn log_density(&self, x: &Signal<T>, sigma: T) -> T {
        Self::log_sum_exp(&self.log_joint(x, sigma))
    }

    /// Posterior component probabilities γ_i(x) under the smoothed mixture.
    pub fn responsibilities(&self, x: &Signal<T>, sigma: T) -> Vec<T> {
        let lj = self.log_joint(x, sigma);
        let lse = Self::log_sum_exp(&lj);
        lj.into_iter().map(|v| (v - lse).exp()).collect()
    }

    /// Closed-form E[x₀ | x_σ = x] = Σ γ_i (μ_i + s_i²/(s_i²+σ²)(x − μ_i)).
    ///
    /// Computed from component posteriors, not from the score, so it can act
    /// as an independent check on Tweedie denoising.
    pub fn mmse_denoise(&self, x: &Signal<T>, sigma: T) -> Signal<T> {
        let gamma = self.responsibilities(x, sigma);
        let mut out = Signal::zeros(self.dim());
        for (i, g) in gamma.iter().enumerate() {
            let s2 = self.stds[i] * self.stds[i];
            let shrink = s2 / self.variance(i, sigma);
            let post = self.means[i].zip_map(x, |mu, xv| mu + shrink * (xv - mu));
            out.axpy(*g, &post);
        }
        out
    }

    pub fn sample(&self, stream: &mut RandomStream) -> Signal<T> {
        let i = self.pick_component(stream);
        let n: Signal<T> = stream.normal_signal(self.dim());
        let mut x = self.means[i].clone();
        x.axpy(self.stds[i], &n);
        x
    }

    fn pick_component(&self, stream: &mut RandomStream) -> usize {
        let u = stream.uniform();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += to_f64(*w);
            if u < acc {
                return i;
            }
        }
        self.components() - 1
    }

    /// Dense Hessian of log p_σ at x:
    /// Σ γ_i (g_i g_iᵀ − I/v_i) − ḡ ḡᵀ with g_i = (μ_i − x)/v_i.
    pub fn hessian(&self, x: &Signal<T>, sigma: T) -> DMatrix<f64> {
        let d = self.dim();
        let gamma = self.responsibilities(x, sigma);
        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut gbar = vec![0.0; d];
        for (i, &gi) in gamma.iter().enumerate() {
            let g = to_f64(gi);
            let v = to_f64(self.variance(i, sigma));
            let grad: Vec<f64> = (0..d)
                .map(|j| (to_f64(self.means[i][j]) - to_f64(x[j])) / v)
                .collect();
            for a in 0..d {
                gbar[a] += g * grad[a];
                h[(a, a)] -= g / v;
                for b in 0..d {
                    h[(a, b)] += g * grad[a] * grad[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] -= gbar[a] * gbar[b];
            }
        }
        h
    }

    /// Spectral norm of the Hessian of log p_σ at x.
    ///
    /// The Hessian is −a I + C with a = Σγ_i/v_i and C = Σγ_i (g_i−ḡ)(g_i−ḡ)ᵀ
    /// positive semidefinite of rank < m, so the spectrum only needs the m×m
    /// Gram matrix of the centred component gradients.
    pub fn hessian_norm(&self, x: &Signal<T>, sigma: T) -> f64 {
        let m = self.components();
        let d = self.dim();
        if m > d {
            let eig = SymmetricEigen::new(self.hessian(x, sigma));
            return eig
                .eigenvalues
                .iter()
                .fold(0.0f64, |acc, e| acc.max(e.abs()));
        }
        let gamma: Vec<f64> = self
            .responsibilities(x, sigma)
            .into_iter()
            .map(to_f64)
            .collect();
        let grads: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let v = to_f64(self.variance(i, sigma));
                (0..d)
                    .map(|j| (to_f64(self.means[i][j]) - to_f64(x[j])) / v)
                    .collect()
            })
            .collect();
        let a: f64 = (0..m)
            .map(|i| gamma[i] / to_f64(self.variance(i, sigma)))
            .sum();
        let gbar: Vec<f64> = (0..d)
            .map(|j| (0..m).map(|i| gamma[i] * grads[i][j]).sum())
            .collect();
        let centred: Vec<Vec<f64>> = grads
            .iter()
            .map(|g| g.iter().zip(&gbar).map(|(x, y)| x - y).collect())
            .collect();
        let gram = DMatrix::<f64>::from_fn(m, m, |i, j| {
            let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(p, q)| p * q).sum();
            (gamma[i] * gamma[j]).sqrt() * dot
        });
        let lam_max = SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &e| acc.max(e));
        a.max((lam_max - a).abs())
    }

    /// M for log p_data. Exact for one component; otherwise the largest
    /// Hessian norm found by sampling (prior draws, inter-mean segments) and
    /// local random-search refinement, floored at max 1/s_i².
    pub fn smoothness_constant(&self) -> &SmoothnessEstimate<T> {
        self.smoothness.get_or_init(|| self.estimate_smoothness())
    }

    fn estimate_smoothness(&self) -> SmoothnessEstimate<T> {
        if self.components() == 1 {
            return SmoothnessEstimate {
                value: T::one() / (self.stds[0] * self.stds[0]),
                analytic: true,
                points_evaluated: 0,
                note: "single Gaussian: M = 1/s^2".into(),
            };
        }
        let zero = T::zero();
        let mut candidates: Vec<(f64, Signal<T>)> = Vec::new();
        let mut push = |x: Signal<T>| {
            let n = self.hessian_norm(&x, zero);
            candidates.push((n, x));
        };
        for mu in &self.means {
            push(mu.clone());
        }
        const SEGMENT_POINTS: usize = 40;
        for i in 0..self.components() {
            for j in (i + 1)..self.components() {
                for t in 0..=SEGMENT_POINTS {
                    let a: T = from_usize::<T>(t) / from_usize::<T>(SEGMENT_POINTS);
                    push(self.means[i].zip_map(&self.means[j], |p, q| p + a * (q - p)));
                }
            }
        }
        let mut stream = RandomStream::new(0x5eed_5eed);
        const PRIOR_DRAWS: usize = 2000;
        for _ in 0..PRIOR_DRAWS {
            push(self.sample(&mut stream));
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        candidates.truncate(8);

        let s_min = self.stds.iter().copied().fold(T::infinity(), T::min);
        let mut evaluated = self.components() + PRIOR_DRAWS;
        let mut best = candidates[0].0;
        for (mut val, mut x) in candidates {
            let mut radius = s_min * lit(0.5);
            for _ in 0..300 {
                let step: Signal<T> = stream.normal_signal(self.dim());
                let mut trial = x.clone();
                trial.axpy(radius / from_usize::<T>(self.dim()).sqrt(), &step);
                let v = self.hessian_norm(&trial, zero);
                evaluated += 1;
                if v > val {
                    val = v;
                    x = trial;
                } else {
                    radius *= lit(0.985);
                }
            }
            best = best.max(val);
        }
        let floor = self
            .stds
            .iter()
            .map(|&s| 1.0 / to_f64(s * s))
            .fold(0.0f64, f64::max);
        SmoothnessEstimate {
            value: lit(best.max(floor)),
            analytic: false,
            points_evaluated: evaluated,
            note: format!(
                "sampled sup of ||Hess log p|| over {evaluated} points \
                 (means, {SEGMENT_POINTS}-point inter-mean segments, {PRIOR_DRAWS} prior draws, \
                 random-search refinement), floored at max 1/s_i^2"
            ),
        }
    }
}

impl<T: Real> ScoreModel<T> for GaussianMixture<T> {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Σ γ_i (μ_i − x)/(s_i² + σ²)
    fn score(&self, x: &Signal<T>, sigma: T) -> Signal<T> {
        let gamma = self.responsibilities(x, sigma);
        let mut out = Signal::zeros(self.dim());
        for (i, g) in gamma.iter().enumerate() {
            let v = self.variance(i, sigma);
            let dir = &self.means[i] - x;
            out.axpy(*g / v, &dir);
        }
        out
    }

    fn smoothness(&self) -> Option<T> {
        Some(self.smoothness_constant().value)
    }
}

impl<T: Real> PointSampler<T> for GaussianMixture<T> {
    fn sample_point(&self, stream: &mut RandomStream) -> Signal<T> {
        self.sample(stream)
    }
}

/// Prior draws perturbed by N(0, σ² I): the σ-smoothed data distribution.
#[derive(Clone, Debug)]
pub struct SmoothedSampler<'a, T> {
    pub prior: &'a GaussianMixture<T>,
    pub sigma: T,
}

impl<T: Real> PointSampler<T> for SmoothedSampler<'_, T> {
    fn sample_point(&self, stream: &mut RandomStream) -> Signal<T> {
        let mut x = self.prior.sample(stream);
        let n: Signal<T> = stream.normal_signal(x.len());
        x.axpy(self.sigma, &n);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sig(v: &[f64]) -> Signal<f64> {
        Signal::new(v.to_vec()).unwrap()
    }

    fn two_component() -> GaussianMixture<f64> {
        GaussianMixture::new(
            vec![0.3, 0.7],
            vec![sig(&[1.0, -0.5, 0.2]), sig(&[-0.4, 0.8, 0.0])],
            vec![0.8, 1.1],
        )
        .unwrap()
    }

    #[test]
    fn single_gaussian_score() {
        let g = GaussianMixture::gaussian(sig(&[0.0, 0.0]), 1.0).unwrap();
        let s = g.score(&sig(&[2.0, 0.0]), 1.0);
        assert_relative_eq!(s[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(s[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn score_vanishes_at_symmetric_points() {
        let mu = sig(&[0.3, -1.2, 2.0]);
        let g = GaussianMixture::gaussian(mu.clone(), 0.7).unwrap();
        assert_eq!(g.score(&mu, 0.4).norm(), 0.0);

        let a = sig(&[1.5, -0.5]);
        let sym = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![a.clone(), a.scale(-1.0)],
            vec![0.6, 0.6],
        )
        .unwrap();
        assert!(sym.score(&Signal::zeros(2), 0.3).norm() < 1e-15);
    }

    #[test]
    fn mmse_single_gaussian_and_limits() {
        let g = GaussianMixture::gaussian(sig(&[0.0, 0.0, 0.0]), 1.0).unwrap();
        let x = sig(&[2.0, -4.0, 1.0]);
        let d = g.mmse_denoise(&x, 1.0);
        for i in 0..3 {
            assert_relative_eq!(d[i], x[i] / 2.0, epsilon = 1e-15);
        }
        let gm = two_component();
        let x = sig(&[0.4, 0.1, -0.3]);
        let near_zero = gm.mmse_denoise(&x, 1e-9);
        for i in 0..3 {
            assert_relative_eq!(near_zero[i], x[i], epsilon = 1e-12);
        }
        let far = gm.mmse_denoise(&x, 1e6);
        let mean = gm.mean();
        for i in 0..3 {
            assert_relative_eq!(far[i], mean[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn score_is_gradient_of_log_density() {
        let gm = two_component();
        let mut stream = RandomStream::new(5);
        let eps = 1e-4;
        for _ in 0..50 {
            let x = gm.sample(&mut stream);
            let sigma = stream.uniform() * 2.0;
            let s = gm.score(&x, sigma);
            for j in 0..3 {
                let mut xp = x.clone().into_vec();
                let mut xm = xp.clone();
                xp[j] += eps;
                xm[j] -= eps;
                let fd = (gm.log_density(&sig(&xp), sigma) - gm.log_density(&sig(&xm), sigma))
                    / (2.0 * eps);
                assert!((fd - s[j]).abs() <= 1e-5, "fd {fd} vs score {}", s[j]);
            }
        }
    }

    #[test]
    fn tweedie_identity_holds() {
        let gm = two_component();
        let mut stream = RandomStream::new(9);
        for _ in 0..200 {
            let x = gm.sample(&mut stream).scale(1.5);
            let sigma = 0.05 + 3.0 * stream.uniform();
            let mut tw = x.clone();
            tw.axpy(sigma * sigma, &gm.score(&x, sigma));
            let mm = gm.mmse_denoise(&x, sigma);
            for j in 0..3 {
                assert!((tw[j] - mm[j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_score() {
        let gm = two_component();
        let mut stream = RandomStream::new(21);
        let eps = 1e-5;
        for _ in 0..20 {
            let x = gm.sample(&mut stream);
            let h = gm.hessian(&x, 0.2);
            for j in 0..3 {
                let mut xp = x.clone().into_vec();
                let mut xm = xp.clone();
                xp[j] += eps;
                xm[j] -= eps;
                let sp = gm.score(&sig(&xp), 0.2);
                let sm = gm.score(&sig(&xm), 0.2);
                for i in 0..3 {
                    let fd = (sp[i] - sm[i]) / (2.0 * eps);
                    assert!((fd - h[(i, j)]).abs() < 1e-6);
                }
            }
            let eig = SymmetricEigen::new(h);
            let full = eig.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()));
            assert_relative_eq!(
                full,
                gm.hessian_norm(&x, 0.2),
                epsilon = 1e-10,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn smoothness_constants() {
        let g = GaussianMixture::gaussian(sig(&[0.0]), 1.0).unwrap();
        assert_eq!(g.smoothness_constant().value, 1.0);
        assert!(g.smoothness_constant().analytic);
        let g = GaussianMixture::gaussian(sig(&[0.0, 1.0]), 0.5).unwrap();
        assert_eq!(g.smoothness_constant().value, 4.0);

        let gm = two_component();
        let est = gm.smoothness_constant();
        assert!(!est.analytic);
        assert!(est.value >= 1.0 / (0.8 * 0.8));
        assert!(est.points_evaluated > 2000);
    }

    #[test]
    fn smoothness_estimate_dominates_dense_grid() {
        // 1-D bimodal mixture: brute-force |d² log p / dx²| on a fine grid by
        // second differences of the log density.
        let gm = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![sig(&[-1.5]), sig(&[1.5])],
            vec![1.0, 1.0],
        )
        .unwrap();
        let h = 1e-4;
        let mut grid_max: f64 = 0.0;
        for i in 0..=4000 {
            let x = -6.0 + 12.0 * i as f64 / 4000.0;
            let f = |t: f64| gm.log_density(&sig(&[t]), 0.0);
            let second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            grid_max = grid_max.max(second.abs());
        }
        let est = gm.smoothness_constant().value;
        assert!(
            est >= grid_max * (1.0 - 1e-4),
            "estimate {est} < grid {grid_max}"
        );
        assert!(est <= grid_max * 1.01);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(GaussianMixture::new(
            vec![0.5, 0.6],
            vec![sig(&[0.0]), sig(&[1.0])],
            vec![1.0, 1.0]
        )
        .is_err());
        let g = GaussianMixture::normalized(
            vec![1.0, 3.0],
            vec![sig(&[0.0]), sig(&[1.0])],
            vec![1.0, 1.0],
        )
        .unwrap();
        assert_relative_eq!(g.weights()[1], 0.75);
    }

    #[test]
    fn single_precision_matches_double() {
        let g64 = two_component();
        let g32 = GaussianMixture::<f32>::new(
            vec![0.3, 0.7],
            vec![
                Signal::new(vec![1.0, -0.5, 0.2]).unwrap(),
                Signal::new(vec![-0.4, 0.8, 0.0]).unwrap(),
            ],
            vec![0.8, 1.1],
        )
        .unwrap();
        let x64 = sig(&[0.2, 0.3, -0.1]);
        let x32 = Signal::new(vec![0.2f32, 0.3, -0.1]).unwrap();
        let s64 = g64.score(&x64, 0.5);
        let s32 = g32.score(&x32, 0.5);
        for i in 0..3 {
            assert!((s64[i] - s32[i] as f64).abs() < 1e-5);
        }
    }
}
