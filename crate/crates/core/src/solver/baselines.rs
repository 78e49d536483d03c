use std::time::Instant;

use super::{
    mse_against, relative_residue, Iterate, IterationRecord, SolveOptions, SolveOutput,
    SolverState, SolverStreams,
};
use crate::config::Method;
use crate::denoiser::tweedie_denoise;
use crate::error::{AcdcError, Result};
use crate::operators::{solve_x_subproblem, DataFidelity};
use crate::priors::ScoreModel;
use crate::rng::{draw_signal, GaussianSource, ZeroNoise};
use crate::scalar::{to_f64, Real};
use crate::signal::Signal;

fn initial_point<T: Real>(
    opts: &SolveOptions<T>,
    fidelity: &DataFidelity<T>,
    model: &dyn ScoreModel<T>,
) -> Result<Signal<T>> {
    let d = fidelity.dim();
    if model.dim() != d {
        return Err(AcdcError::DimensionMismatch {
            expected: d,
            found: model.dim(),
        });
    }
    match &opts.init {
        Some(x) => {
            x.ensure_len(d)?;
            Ok(x.clone())
        }
        None => Ok(fidelity.operator().back_project(fidelity.observation())),
    }
}

fn elapsed_ms(timing: bool, started: Instant) -> f64 {
    if timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

/// Half-quadratic splitting with a Tweedie denoiser:
///
/// x ← argmin ℓ(x) + (μ/2)‖x − z‖², x̃ ← x + ζ(x̃_prev − x) + σ(1 − ζ)n,
/// z ← x̃ + σ² s(x̃, σ).
///
/// The first iteration has no x̃_prev and injects x + σn.
pub fn diffpir_solve<T: Real>(
    opts: &SolveOptions<T>,
    fidelity: &DataFidelity<T>,
    model: &dyn ScoreModel<T>,
    truth: Option<&Signal<T>>,
    streams: &mut SolverStreams,
) -> Result<SolveOutput<T>> {
    opts.validate()?;
    let x0 = initial_point(opts, fidelity, model)?;
    let d = x0.len();
    let mu = opts.mu_hqs.unwrap_or(opts.rho);
    if !(mu > T::zero()) {
        return Err(AcdcError::invalid("μ_hqs must be positive"));
    }
    let zeta = opts.zeta;
    let mut silent = ZeroNoise;
    let noise: &mut dyn GaussianSource = if opts.denoiser.zero_noise {
        &mut silent
    } else {
        &mut streams.baseline
    };
    let mut state = SolverState {
        z: x0.clone(),
        x: x0,
        u: Signal::zeros(d),
        rho: mu,
        k: 0,
        beta: None,
    };
    let mut x_tilde_prev: Option<Signal<T>> = None;
    let iters = opts.schedule.max_iters();
    let mut trace = Vec::with_capacity(iters);
    let mut iterates = opts.record_iterates.then(Vec::new);
    for k in 1..=iters {
        let started = Instant::now();
        let mut step = || -> Result<_> {
            let slice = opts.schedule.schedule_at(k - 1)?;
            let (x, _) = solve_x_subproblem(
                fidelity,
                &state.z,
                &state.u,
                mu,
                &opts.inner,
                Some(&state.x),
            )?;
            let n: Signal<T> = draw_signal(noise, d);
            let x_tilde = match &x_tilde_prev {
                Some(prev) => {
                    let mut t = x.clone();
                    t.axpy(zeta, &(prev - &x));
                    t.axpy(slice.sigma * (T::one() - zeta), &n);
                    t
                }
                None => {
                    let mut t = x.clone();
                    t.axpy(slice.sigma, &n);
                    t
                }
            };
            let z = tweedie_denoise(&x_tilde, model, slice.sigma)?;
            if !(x.is_finite() && z.is_finite()) {
                return Err(AcdcError::Divergence {
                    stage: "diffpir",
                    step: k,
                });
            }
            Ok((slice, x, x_tilde, z))
        };
        let (slice, x, x_tilde, z) = step().map_err(|e| e.at_iteration(k))?;
        x_tilde_prev = Some(x_tilde);
        let next = SolverState {
            x,
            z,
            u: state.u.clone(),
            rho: mu,
            k,
            beta: None,
        };
        let beta = relative_residue(&next, &state)?;
        trace.push(IterationRecord {
            k,
            sigma: to_f64(slice.sigma),
            sigma_s: to_f64(slice.sigma_s),
            rho: to_f64(mu),
            beta: to_f64(beta),
            primal_res: to_f64(next.x.dist(&next.z)),
            dual_change: 0.0,
            loss: to_f64(fidelity.loss(&next.z)),
            mse: mse_against(&next.z, truth),
            ms: elapsed_ms(opts.timing, started),
        });
        if let Some(it) = iterates.as_mut() {
            it.push(Iterate {
                x: next.x.clone(),
                z: next.z.clone(),
                u: next.u.clone(),
            });
        }
        state = SolverState {
            beta: Some(beta),
            ..next
        };
    }
    Ok(SolveOutput {
        method: Method::Diffpir,
        estimate: state.z.clone(),
        state,
        trace,
        iterates,
        rho_increases: 0,
        dc_condition_violations: 0,
    })
}

/// x ← x − δ∇ℓ(x) − η(x̃ − D_σ(x̃)), x̃ = x + σε, with Tweedie D_σ.
pub fn snore_solve<T: Real>(
    opts: &SolveOptions<T>,
    fidelity: &DataFidelity<T>,
    model: &dyn ScoreModel<T>,
    truth: Option<&Signal<T>>,
    streams: &mut SolverStreams,
) -> Result<SolveOutput<T>> {
    opts.validate()?;
    let (delta, eta) = (opts.snore_step, opts.snore_reg);
    if !(delta > T::zero() && eta > T::zero()) {
        return Err(AcdcError::invalid("SNORE step sizes must be positive"));
    }
    let x0 = initial_point(opts, fidelity, model)?;
    let d = x0.len();
    let mut silent = ZeroNoise;
    let noise: &mut dyn GaussianSource = if opts.denoiser.zero_noise {
        &mut silent
    } else {
        &mut streams.baseline
    };
    let mut state = SolverState {
        z: x0.clone(),
        x: x0,
        u: Signal::zeros(d),
        rho: T::zero(),
        k: 0,
        beta: None,
    };
    let iters = opts.schedule.max_iters();
    let mut trace = Vec::with_capacity(iters);
    let mut iterates = opts.record_iterates.then(Vec::new);
    for k in 1..=iters {
        let started = Instant::now();
        let mut step = || -> Result<_> {
            let slice = opts.schedule.schedule_at(k - 1)?;
            let eps: Signal<T> = draw_signal(noise, d);
            let mut x_tilde = state.x.clone();
            x_tilde.axpy(slice.sigma, &eps);
            let denoised = tweedie_denoise(&x_tilde, model, slice.sigma)?;
            let reg = &x_tilde - &denoised;
            let mut x = state.x.clone();
            x.axpy(-delta, &fidelity.grad(&state.x));
            x.axpy(-eta, &reg);
            if !x.is_finite() {
                return Err(AcdcError::Divergence {
                    stage: "snore",
                    step: k,
                });
            }
            Ok((slice, x, denoised, reg))
        };
        let (slice, x, denoised, reg) = step().map_err(|e| e.at_iteration(k))?;
        let next = SolverState {
            x,
            z: denoised,
            u: state.u.clone(),
            rho: T::zero(),
            k,
            beta: None,
        };
        let beta = relative_residue(&next, &state)?;
        trace.push(IterationRecord {
            k,
            sigma: to_f64(slice.sigma),
            sigma_s: 0.0,
            rho: 0.0,
            beta: to_f64(beta),
            primal_res: to_f64(reg.norm()),
            dual_change: 0.0,
            loss: to_f64(fidelity.loss(&next.x)),
            mse: mse_against(&next.x, truth),
            ms: elapsed_ms(opts.timing, started),
        });
        if let Some(it) = iterates.as_mut() {
            it.push(Iterate {
                x: next.x.clone(),
                z: next.z.clone(),
                u: next.u.clone(),
            });
        }
        state = SolverState {
            beta: Some(beta),
            ..next
        };
    }
    Ok(SolveOutput {
        method: Method::Snore,
        estimate: state.x.clone(),
        state,
        trace,
        iterates,
        rho_increases: 0,
        dc_condition_violations: 0,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::denoiser::DenoiserConfig;
    use crate::operators::{ForwardOperator, Identity};
    use crate::priors::GaussianMixture;
    use crate::schedule::NoiseSchedule;

    fn identity_problem(y: Signal<f64>, sigma_n: f64) -> DataFidelity<f64> {
        let d = y.len();
        let op: Arc<dyn ForwardOperator<f64>> = Arc::new(Identity::new(d));
        DataFidelity::new(y, sigma_n, op).unwrap()
    }

    #[test]
    fn diffpir_without_noise_is_plain_hqs() {
        // σ ≡ 0 and ζ = 0: x ← (y/σ_n² + μz)/(1/σ_n² + μ), z ← x, which
        // converges to y.
        let y = Signal::new(vec![1.0, -2.0, 0.5]).unwrap();
        let f = identity_problem(y.clone(), 0.5);
        let prior = GaussianMixture::gaussian(Signal::zeros(3), 1.0).unwrap();
        let mut opts =
            SolveOptions::new(NoiseSchedule::frozen(0.0, 0.0, 0.0, 0, 200).unwrap(), 1.0);
        opts.zeta = 0.0;
        opts.init = Some(Signal::zeros(3));
        let out = diffpir_solve(
            &opts,
            &f,
            &prior,
            Some(&y),
            &mut SolverStreams::from_seed(0),
        )
        .unwrap();
        let w = 1.0 / 0.25;
        let x1 = y.scale(w / (w + 1.0));
        assert_eq!(out.trace.len(), 200);
        assert!(out.estimate.dist(&y) < 1e-8);
        let one = SolveOptions {
            schedule: NoiseSchedule::frozen(0.0, 0.0, 0.0, 0, 1).unwrap(),
            ..opts
        };
        let first =
            diffpir_solve(&one, &f, &prior, None, &mut SolverStreams::from_seed(0)).unwrap();
        assert!(first.estimate.dist(&x1) < 1e-10);
    }

    #[test]
    fn diffpir_first_step_is_pure_injection() {
        let y = Signal::new(vec![0.0, 0.0]).unwrap();
        let f = identity_problem(y, 1.0);
        let prior = GaussianMixture::gaussian(Signal::zeros(2), 1.0).unwrap();
        let mut opts = SolveOptions::new(NoiseSchedule::frozen(2.0, 0.1, 0.01, 0, 1).unwrap(), 1.0);
        opts.zeta = 1.0;
        opts.init = Some(Signal::zeros(2));
        let mut streams = SolverStreams::from_seed(9);
        let out = diffpir_solve(&opts, &f, &prior, None, &mut streams).unwrap();
        // x stays at 0; x̃ = 2n, z = x̃/(1 + 4).
        let mut replay = SolverStreams::from_seed(9).baseline;
        let n: Signal<f64> = replay.normal_signal(2);
        assert!(out.estimate.dist(&n.scale(2.0 / 5.0)) < 1e-12);
    }

    #[test]
    fn snore_fixed_point_at_prior_mean() {
        let mu = Signal::new(vec![0.3, -0.4]).unwrap();
        let f = identity_problem(mu.clone(), 0.1);
        let prior = GaussianMixture::gaussian(mu.clone(), 1.0).unwrap();
        let mut opts = SolveOptions::new(NoiseSchedule::frozen(0.0, 0.0, 0.0, 0, 20).unwrap(), 1.0);
        opts.init = Some(mu.clone());
        let out = snore_solve(&opts, &f, &prior, None, &mut SolverStreams::from_seed(0)).unwrap();
        assert!(out.estimate.dist(&mu) < 1e-14);
    }

    #[test]
    fn snore_zero_noise_is_deterministic_descent() {
        let y = Signal::new(vec![1.0, 2.0]).unwrap();
        let f = identity_problem(y.clone(), 1.0);
        let prior = GaussianMixture::gaussian(Signal::zeros(2), 1.0).unwrap();
        let mut opts = SolveOptions::new(NoiseSchedule::frozen(1.0, 0.1, 0.01, 0, 1).unwrap(), 1.0);
        opts.denoiser = DenoiserConfig {
            zero_noise: true,
            ..Default::default()
        };
        opts.snore_step = 0.1;
        opts.snore_reg = 0.5;
        opts.init = Some(Signal::zeros(2));
        let out = snore_solve(&opts, &f, &prior, None, &mut SolverStreams::from_seed(0)).unwrap();
        // x = 0 − 0.1(0 − y) − 0.5·0 = 0.1y.
        assert!(out.estimate.dist(&y.scale(0.1)) < 1e-14);
    }
}
