//! Synthetic experiments driven by an [`ExperimentConfig`]: draw a truth
//! from the prior, build the operator, simulate the measurement, then run a
//! solver or the diagnostic checks.

use log::info;
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::diagnostics::{
    psnr_mse, score_bound_l, test_boundedness, test_weak_nonexpansiveness, theorem2_constants,
    theorem3_ck, AcdcHandle, BoundInputs, BoundReport, BoundednessReport, NonexpansiveReport,
};
use crate::error::{AcdcError, Result};
use crate::operators::{dense_matrix, make_operator, DataFidelity};
use crate::priors::{
    empirical_coercivity, empirical_smoothness, CoercivityReport, GaussianMixture, ScoreModel,
    SmoothedSampler, SmoothnessReport,
};
use crate::rng::{labels, RandomStream};
use crate::scalar::{lit, to_f64, Real};
use crate::signal::Signal;
use crate::solver::{
    admm_pnp_solve, diffpir_solve, snore_solve, SolveOptions, SolveOutput, SolverStreams,
};

/// One simulated inverse problem.
pub struct Problem<T: Real> {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub prior: GaussianMixture<T>,
    pub truth: Signal<T>,
    pub fidelity: DataFidelity<T>,
}

impl<T: Real> Problem<T> {
    /// Truth, operator and measurement noise each come from their own
    /// substream of `seed`.
    pub fn build(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.problem.dim;
        let prior = GaussianMixture::<T>::from_config(&config.prior)?;
        let root = RandomStream::new(seed);
        let truth = prior.sample(&mut root.substream(labels::TRUTH));
        let op = make_operator::<T>(
            &config.problem.operator,
            d,
            &mut root.substream(labels::OPERATOR),
        )?;
        let sigma_n: T = lit(config.problem.noise_std);
        let mut y = op.apply(&truth);
        let noise: Signal<T> = root.substream(labels::MEASUREMENT).normal_signal(y.len());
        y.axpy(sigma_n, &noise);
        let fidelity = DataFidelity::new(y, sigma_n, op)?;
        Ok(Self {
            config: config.clone(),
            seed,
            prior,
            truth,
            fidelity,
        })
    }

    pub fn dim(&self) -> usize {
        self.truth.len()
    }

    pub fn options(&self) -> Result<SolveOptions<T>> {
        SolveOptions::from_config(&self.config)
    }

    /// Runs the configured method with solver noise seeded by `seed`.
    pub fn solve(&self, opts: &SolveOptions<T>) -> Result<SolveOutput<T>> {
        let mut streams = SolverStreams::from_seed(self.seed);
        let truth = Some(&self.truth);
        let method = self.config.solver.method;
        info!(
            "running {method:?} on d = {} with seed {}",
            self.dim(),
            self.seed
        );
        match method {
            Method::Admm => admm_pnp_solve(opts, &self.fidelity, &self.prior, truth, &mut streams),
            Method::Diffpir => {
                diffpir_solve(opts, &self.fidelity, &self.prior, truth, &mut streams)
            }
            Method::Snore => snore_solve(opts, &self.fidelity, &self.prior, truth, &mut streams),
        }
    }

    /// PSNR peak: the truth's largest magnitude (1 for an all-zero truth).
    pub fn peak(&self) -> f64 {
        let p = to_f64(self.truth.max_abs());
        if p > 0.0 {
            p
        } else {
            1.0
        }
    }

    pub fn metrics(&self, est: &Signal<T>) -> Result<(f64, f64)> {
        psnr_mse(est, &self.truth, self.peak())
    }

    /// A⁺y for linear operators; `None` otherwise.
    pub fn least_squares_estimate(&self) -> Option<Signal<T>> {
        min_norm_least_squares(&self.fidelity)
    }

    /// Diameter D used for L = M·D + S: the configured truncation, or twice
    /// the distance from the prior mean to its farthest component mean plus
    /// three standard deviations per coordinate.
    pub fn domain_diameter(&self) -> f64 {
        if let Some(d) = self
            .config
            .diagnostics
            .as_ref()
            .and_then(|c| c.domain_diameter)
        {
            return d;
        }
        default_domain_diameter(&self.prior)
    }

    /// S: the smallest data-score norm over the component means.
    pub fn score_anchor(&self) -> f64 {
        self.prior
            .means()
            .iter()
            .map(|m| to_f64(self.prior.score(m, T::zero()).norm()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Bound constants at 1-based iteration `k` (schedule index k − 1).
    pub fn bound_report(&self, k: usize, rho: f64) -> Result<BoundReport> {
        let sched = self.options()?.schedule;
        let slice = sched.schedule_at(k.saturating_sub(1))?;
        let m = self.prior.smoothness_constant();
        let m_val = to_f64(m.value);
        let mut rep = BoundReport::evaluate(&BoundInputs {
            k: Some(k),
            m: m_val,
            m_analytic: m.analytic,
            sigma: to_f64(slice.sigma),
            sigma_s: to_f64(slice.sigma_s),
            nu: to_f64(sched.nu_at(k.max(1))?),
            d: self.dim(),
            mu: self.fidelity.strong_convexity().filter(|&mu| mu > 1e-12),
            rho,
            l: Some(score_bound_l(
                m_val,
                self.domain_diameter(),
                self.score_anchor(),
            )),
        })?;
        rep.notes.push(format!(
            "L = M·D + S with D = {:.4} and S = {:.4} (min score norm at component means)",
            self.domain_diameter(),
            self.score_anchor()
        ));
        Ok(rep)
    }
}

pub fn default_domain_diameter<T: Real>(prior: &GaussianMixture<T>) -> f64 {
    let centre = prior.mean();
    let spread = prior
        .means()
        .iter()
        .map(|m| to_f64(m.dist(&centre)))
        .fold(0.0, f64::max);
    let s_max = prior.stds().iter().map(|&s| to_f64(s)).fold(0.0, f64::max);
    2.0 * (spread + 3.0 * s_max * (prior.dim() as f64).sqrt())
}

/// Minimum-norm least-squares solution via the SVD pseudo-inverse, with
/// singular values below 1e-10 of the largest treated as zero.
pub fn min_norm_least_squares<T: Real>(f: &DataFidelity<T>) -> Option<Signal<T>> {
    let op = f.operator();
    if !op.is_linear() {
        return None;
    }
    let a = dense_matrix(op.as_ref());
    let svd = a.svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.iter().copied().fold(0.0, f64::max);
    let pinv = svd.pseudo_inverse(cutoff.max(f64::MIN_POSITIVE)).ok()?;
    let y = DVector::from_vec(f.observation().to_f64_vec());
    let x = pinv * y;
    Signal::from_f64(x.as_slice()).ok()
}

/// Final-iteration numbers of one solve.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
    pub mse: f64,
    pub psnr: f64,
    pub final_beta: f64,
    pub final_rho: f64,
    pub rho_increases: usize,
    pub dc_condition_violations: usize,
    /// MSE of A⁺y, for linear operators.
    pub least_squares_mse: Option<f64>,
}

impl RunSummary {
    pub fn new<T: Real>(problem: &Problem<T>, out: &SolveOutput<T>) -> Result<Self> {
        let (mse, psnr) = problem.metrics(&out.estimate)?;
        let least_squares_mse = match problem.least_squares_estimate() {
            Some(ls) => Some(problem.metrics(&ls)?.0),
            None => None,
        };
        Ok(Self {
            method: out.method,
            seed: problem.seed,
            iterations: out.trace.len(),
            mse,
            psnr,
            final_beta: out.final_record().map(|r| r.beta).unwrap_or(f64::NAN),
            final_rho: to_f64(out.state.rho),
            rho_increases: out.rho_increases,
            dc_condition_violations: out.dc_condition_violations,
            least_squares_mse,
        })
    }

    pub fn line(&self) -> String {
        let ls = self
            .least_squares_mse
            .map(|m| format!(" ls_mse={m:.6e}"))
            .unwrap_or_default();
        format!(
            "method={} seed={} K={} mse={:.6e} psnr={:.3} beta={:.3e} rho={} rho_increases={}{ls}",
            serde_json::to_value(self.method)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            self.seed,
            self.iterations,
            self.mse,
            self.psnr,
            self.final_beta,
            self.final_rho,
            self.rho_increases,
        )
    }
}

/// One PASS/FAIL line of `acdc diagnose`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointCheck<R> {
    pub k: usize,
    pub report: R,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseOutput {
    pub bounds: Vec<BoundReport>,
    pub smoothness: Option<SmoothnessReport>,
    pub coercivity: Option<CoercivityReport>,
    pub nonexpansive: Vec<PointCheck<NonexpansiveReport>>,
    pub boundedness: Vec<PointCheck<BoundednessReport>>,
    pub checks: Vec<CheckOutcome>,
}

/// Slack added to the 2e^(−ν) ceiling for Monte-Carlo error.
pub const RATE_SLACK: f64 = 0.05;
const SMOOTHNESS_REL_TOL: f64 = 1e-3;
const COERCIVITY_BASE_POINTS: usize = 50;

/// Iterations (1-based) whose slice satisfies σ_s² + σ² < 1/M, thinned to
/// at most five with distinct σ, spread evenly from first to last.
pub fn admissible_points<T: Real>(problem: &Problem<T>) -> Result<Vec<usize>> {
    let sched = problem.options()?.schedule;
    let m = to_f64(problem.prior.smoothness_constant().value);
    let mut ks: Vec<usize> = Vec::new();
    let mut last_sigma = f64::NAN;
    for k in 1..=sched.max_iters() {
        let s = sched.schedule_at(k - 1)?;
        let (sig, ss) = (to_f64(s.sigma), to_f64(s.sigma_s));
        if sig == last_sigma {
            continue;
        }
        last_sigma = sig;
        if sig > 0.0 && ss * ss + sig * sig < 1.0 / m {
            ks.push(k);
        }
    }
    if ks.len() <= 5 {
        return Ok(ks);
    }
    let n = ks.len() - 1;
    Ok((0..5).map(|i| ks[i * n / 4]).collect())
}

/// Runs every check enabled in the config's `diagnostics` block (all of
/// them when the block is absent).
pub fn diagnose<T: Real>(problem: &Problem<T>) -> Result<DiagnoseOutput> {
    let dcfg = problem.config.diagnostics.clone().unwrap_or_default();
    let root = RandomStream::new(problem.seed).substream(labels::DIAGNOSTICS);
    let opts = problem.options()?;
    let prior = &problem.prior;
    let m_est = prior.smoothness_constant();
    let m = to_f64(m_est.value);
    let mut checks = Vec::new();

    let smoothness = if dcfg.smoothness {
        let sigma: T = lit(dcfg.smoothness_sigma);
        let sampler = SmoothedSampler { prior, sigma };
        let rep =
            empirical_smoothness(prior, sigma, dcfg.n_pairs, &sampler, &mut root.substream(1));
        checks.push(smoothness_check(prior, &rep));
        Some(rep)
    } else {
        None
    };

    let coercivity = if dcfg.coercivity {
        let mut s = root.substream(2);
        let base: Vec<Signal<T>> = (0..COERCIVITY_BASE_POINTS)
            .map(|_| prior.sample(&mut s))
            .collect();
        let scales: Vec<T> = dcfg.coercivity_scales.iter().map(|&c| lit(c)).collect();
        if scales.is_empty() {
            return Err(AcdcError::Config(
                "diagnostics.coercivity_scales is empty".into(),
            ));
        }
        let rep = empirical_coercivity(prior, &scales, &base);
        checks.push(CheckOutcome {
            name: "coercivity".into(),
            passed: rep.slope > 0.0,
            detail: format!(
                "fitted slope {:.4} over {} points",
                rep.slope,
                rep.pairs.len()
            ),
        });
        Some(rep)
    } else {
        None
    };

    let points = if dcfg.points.is_empty() {
        admissible_points(problem)?
    } else {
        dcfg.points.clone()
    };
    let rho = to_f64(opts.rho);
    let mut bounds = Vec::new();
    let mut nonexpansive = Vec::new();
    let mut boundedness = Vec::new();
    for (i, &k) in points.iter().enumerate() {
        if k == 0 || k > opts.schedule.max_iters() {
            return Err(AcdcError::Config(format!(
                "diagnostics point {k} outside 1..={}",
                opts.schedule.max_iters()
            )));
        }
        let slice = opts.schedule.schedule_at(k - 1)?;
        let nu = to_f64(opts.schedule.nu_at(k)?);
        let report = problem.bound_report(k, rho)?;
        let handle = AcdcHandle {
            model: prior,
            slice,
            config: opts.denoiser.clone(),
        };
        let sampler = SmoothedSampler {
            prior,
            sigma: slice.sigma,
        };
        let (sig, ss) = (to_f64(slice.sigma), to_f64(slice.sigma_s));
        if dcfg.nonexpansive {
            let t2 = theorem2_constants(m, sig, ss, nu, problem.dim())?;
            let rep = test_weak_nonexpansiveness(
                &handle,
                t2.eps,
                t2.delta_conservative,
                nu,
                dcfg.n_pairs,
                &sampler,
                &mut root.substream(100 + i as u64),
            )?;
            checks.push(CheckOutcome {
                name: format!("nonexpansive[k={k}]"),
                passed: rep.passes(RATE_SLACK),
                detail: format!(
                    "violation rate {:.4} vs ceiling 2e^(-nu) = {:.3e} (+{RATE_SLACK}), eps = {:.4}, delta = {:.4}",
                    rep.violation_rate, rep.ceiling, rep.eps, rep.delta
                ),
            });
            nonexpansive.push(PointCheck { k, report: rep });
        }
        if dcfg.boundedness {
            let l = report.l.unwrap_or(0.0);
            let t3 = theorem3_ck(m, sig, ss, nu, l)?;
            let rep = test_boundedness(
                &handle,
                t3.ck_conservative,
                dcfg.n_pairs,
                &sampler,
                &mut root.substream(200 + i as u64),
            )?;
            let ceiling = 2.0 * (-nu).exp();
            checks.push(CheckOutcome {
                name: format!("boundedness[k={k}]"),
                passed: rep.violation_rate <= ceiling + RATE_SLACK,
                detail: format!(
                    "violation rate {:.4} vs ceiling {:.3e} (+{RATE_SLACK}), c_k = {:.4}, max (1/d)|D(x)-x|^2 = {:.4}",
                    rep.violation_rate, ceiling, rep.ck, rep.max_value
                ),
            });
            boundedness.push(PointCheck { k, report: rep });
        }
        bounds.push(report);
    }
    if points.is_empty() && (dcfg.nonexpansive || dcfg.boundedness) {
        checks.push(CheckOutcome {
            name: "schedule".into(),
            passed: false,
            detail: format!("no iteration satisfies sigma_s^2 + sigma^2 < 1/M with M = {m:.4}"),
        });
    }
    Ok(DiagnoseOutput {
        bounds,
        smoothness,
        coercivity,
        nonexpansive,
        boundedness,
        checks,
    })
}

fn smoothness_check<T: Real>(prior: &GaussianMixture<T>, rep: &SmoothnessReport) -> CheckOutcome {
    let name = "smoothness".to_string();
    if prior.components() == 1 {
        // Linear score: every ratio equals 1/(s² + σ²).
        let s = to_f64(prior.stds()[0]);
        let exact = 1.0 / (s * s + rep.sigma * rep.sigma);
        let worst = rep
            .ratios
            .iter()
            .map(|r| (r - exact).abs())
            .fold(0.0, f64::max);
        return CheckOutcome {
            name,
            passed: worst <= 1e-9 * exact.max(1.0),
            detail: format!(
                "ratio {:.9} vs 1/(s^2+sigma^2) = {exact:.9}, worst deviation {worst:.2e}",
                rep.max_ratio
            ),
        };
    }
    match (rep.within_bound(SMOOTHNESS_REL_TOL), rep.m_sigma_bound) {
        (Some(ok), Some(b)) => CheckOutcome {
            name,
            passed: ok,
            detail: format!("max ratio {:.6} vs M/(1+M sigma^2) = {b:.6}", rep.max_ratio),
        },
        _ => CheckOutcome {
            name,
            passed: false,
            detail: format!(
                "bound not applicable at sigma = {} (needs sigma^2 < 1/M); max ratio {:.6}",
                rep.sigma, rep.max_ratio
            ),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json_str(json).unwrap()
    }

    const CS: &str = r#"{
        "problem": {"dim": 4, "noise_std": 0.05, "operator": {"kind": "gaussian_projection", "rows": 2}},
        "prior": {"weights": [0.5, 0.5], "means": [[1,1,1,1],[-1,-1,-1,-1]], "stds": [0.3, 0.3]},
        "schedule": {"W": 10, "tail": 5},
        "seed": 3
    }"#;

    #[test]
    fn build_is_deterministic_and_seed_sensitive() {
        let c = cfg(CS);
        let a = Problem::<f64>::build(&c, 3).unwrap();
        let b = Problem::<f64>::build(&c, 3).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.fidelity.observation(), b.fidelity.observation());
        let other = Problem::<f64>::build(&c, 4).unwrap();
        assert_ne!(a.truth, other.truth);
    }

    #[test]
    fn least_squares_fits_the_measurement() {
        let p = Problem::<f64>::build(&cfg(CS), 1).unwrap();
        let ls = p.least_squares_estimate().unwrap();
        let resid = &p.fidelity.operator().apply(&ls) - p.fidelity.observation();
        assert!(resid.norm() < 1e-9);
        // Minimum norm: no component in the null space, so it equals Aᵀ(AAᵀ)⁻¹y.
        let a = dense_matrix(p.fidelity.operator().as_ref());
        let y = DVector::from_vec(p.fidelity.observation().to_f64_vec());
        let w = (&a * a.transpose()).try_inverse().unwrap() * y;
        let x = a.transpose() * w;
        for i in 0..4 {
            assert!((x[i] - ls[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_summary_is_finite() {
        let p = Problem::<f64>::build(&cfg(CS), 2).unwrap();
        let out = p.solve(&p.options().unwrap()).unwrap();
        assert_eq!(out.trace.len(), 15);
        let s = RunSummary::new(&p, &out).unwrap();
        assert!(s.mse.is_finite() && s.least_squares_mse.unwrap().is_finite());
        assert!(s.line().starts_with("method=admm seed=2 K=15 "));
        let rep = p.bound_report(15, 100.0).unwrap();
        assert!(rep.l.unwrap() > 0.0);
        // Rank-deficient A: no strong convexity, so no ball radius.
        assert!(rep.r.is_none());
    }

    #[test]
    fn nonlinear_has_no_least_squares() {
        let c = cfg(&CS.replace(
            r#"{"kind": "gaussian_projection", "rows": 2}"#,
            r#"{"kind": "hdr"}"#,
        ));
        let p = Problem::<f64>::build(&c, 0).unwrap();
        assert!(p.least_squares_estimate().is_none());
    }

    #[test]
    fn diagnose_single_gaussian() {
        let c = cfg(r#"{
            "problem": {"dim": 3, "operator": {"kind": "identity"}},
            "prior": {"weights": [1.0], "means": [[0,0,0]], "stds": [1.0]},
            "schedule": {"W": 20, "tail": 2},
            "diagnostics": {"n_pairs": 100, "smoothness_sigma": 0.5, "boundedness": false}
        }"#);
        let p = Problem::<f64>::build(&c, 0).unwrap();
        let out = diagnose(&p).unwrap();
        let names: Vec<&str> = out.checks.iter().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"smoothness"));
        assert!(!names.iter().any(|n| n.starts_with("boundedness")));
        let sm = out.checks.iter().find(|c| c.name == "smoothness").unwrap();
        assert!(sm.passed, "{}", sm.detail);
        let co = out.checks.iter().find(|c| c.name == "coercivity").unwrap();
        assert!(co.passed);
        // σ_k ≥ 0.1 with M = 1 leaves only the last few slices admissible.
        assert!(!out.nonexpansive.is_empty() && out.nonexpansive.len() <= 5);
        assert_eq!(out.bounds.len(), out.nonexpansive.len());
    }
}
