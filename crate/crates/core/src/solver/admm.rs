use std::time::Instant;

use log::{debug, info, warn};

use super::{
    adapt_rho, mse_against, relative_residue, Iterate, IterationRecord, SolveOptions, SolveOutput,
    SolverState, SolverStreams,
};
use crate::config::Method;
use crate::denoiser::acdc_denoise;
use crate::error::{AcdcError, Result};
use crate::operators::{solve_x_subproblem, DataFidelity};
use crate::priors::ScoreModel;
use crate::scalar::{lit, to_f64, Real};
use crate::signal::Signal;

/// ADMM-PnP with the AC-DC denoiser in place of the z-proximal step:
///
/// x ← argmin (1/ρ)ℓ(x) + ½‖x − z + u‖², z ← D(x + u), u ← u + x − z.
///
/// Runs every iteration of the schedule and returns z as the estimate.
pub fn admm_pnp_solve<T: Real>(
    opts: &SolveOptions<T>,
    fidelity: &DataFidelity<T>,
    model: &dyn ScoreModel<T>,
    truth: Option<&Signal<T>>,
    streams: &mut SolverStreams,
) -> Result<SolveOutput<T>> {
    opts.validate()?;
    let d = fidelity.dim();
    if model.dim() != d {
        return Err(AcdcError::DimensionMismatch {
            expected: d,
            found: model.dim(),
        });
    }
    if let Some(t) = truth {
        t.ensure_len(d)?;
    }
    let x0 = match &opts.init {
        Some(x) => {
            x.ensure_len(d)?;
            x.clone()
        }
        None => fidelity.operator().back_project(fidelity.observation()),
    };
    let mut state = SolverState {
        z: x0.clone(),
        x: x0,
        u: Signal::zeros(d),
        rho: opts.rho,
        k: 0,
        beta: None,
    };
    let iters = opts.schedule.max_iters();
    let mut trace = Vec::with_capacity(iters);
    let mut iterates = opts.record_iterates.then(|| Vec::with_capacity(iters));
    let mut rho_increases = 0;
    let mut violations = 0;

    for k in 1..=iters {
        let started = Instant::now();
        let mut step = || -> Result<_> {
            let slice = opts.schedule.schedule_at(k - 1)?;
            let (x, _) = solve_x_subproblem(
                fidelity,
                &state.z,
                &state.u,
                state.rho,
                &opts.inner,
                Some(&state.x),
            )?;
            let (z, tr) = acdc_denoise(
                &(&x + &state.u),
                model,
                &slice,
                &opts.denoiser,
                &mut streams.ac,
                &mut streams.dc,
            )?;
            let u = &state.u + &(&x - &z);
            if !(x.is_finite() && z.is_finite() && u.is_finite()) {
                return Err(AcdcError::Divergence {
                    stage: "admm",
                    step: k,
                });
            }
            Ok((slice, x, z, u, tr.dc_condition_violated))
        };
        let (slice, x, z, u, violated) = step().map_err(|e| e.at_iteration(k))?;
        if violated {
            if violations == 0 {
                warn!(
                    "DC condition σ_s² < 1/M_σ violated from iteration {k} (σ = {})",
                    slice.sigma
                );
            }
            violations += 1;
        }

        let next = SolverState {
            x,
            z,
            u,
            rho: state.rho,
            k,
            beta: None,
        };
        let beta = relative_residue(&next, &state)?;
        let record = IterationRecord {
            k,
            sigma: to_f64(slice.sigma),
            sigma_s: to_f64(slice.sigma_s),
            rho: to_f64(state.rho),
            beta: to_f64(beta),
            primal_res: to_f64(next.x.dist(&next.z)),
            dual_change: to_f64(next.u.dist(&state.u)),
            loss: to_f64(fidelity.loss(&next.z)),
            mse: mse_against(&next.z, truth),
            ms: if opts.timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        };
        debug!("admm k={k} beta={:.3e} rho={}", record.beta, record.rho);
        trace.push(record);

        let mut rho = state.rho;
        if let (Some(ad), Some(old)) = (opts.adaptive, state.beta) {
            let new_rho = adapt_rho(beta, old, rho, lit(ad.gamma), lit(ad.eta_beta));
            if new_rho > rho {
                rho_increases += 1;
                debug!("ρ increased to {new_rho} at iteration {k}");
            }
            rho = new_rho;
        }
        if let Some(it) = iterates.as_mut() {
            it.push(Iterate {
                x: next.x.clone(),
                z: next.z.clone(),
                u: next.u.clone(),
            });
        }
        state = SolverState {
            rho,
            beta: Some(beta),
            ..next
        };
    }
    if opts.adaptive.is_some() {
        info!(
            "adaptive ρ increased {rho_increases} times, final ρ = {}",
            state.rho
        );
    }
    Ok(SolveOutput {
        method: Method::Admm,
        estimate: state.z.clone(),
        state,
        trace,
        iterates,
        rho_increases,
        dc_condition_violations: violations,
    })
}
