//! The three-stage AC-DC denoiser: auto correction (AC), directional
//! correction (DC) by Langevin steps, and a Tweedie or probability-flow ODE
//! read-out.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::config::{BackendConfig, IntegratorConfig, SolverConfig};
use crate::error::{AcdcError, Result};
use crate::priors::ScoreModel;
use crate::rng::{draw_signal, GaussianSource, ZeroNoise};
use crate::scalar::{from_usize, lit, Real};
use crate::schedule::ScheduleSlice;
use crate::signal::Signal;

/// Lower end of the ODE grid; the remaining [0, floor] is covered by an
/// exact Tweedie hop.
pub const ODE_SIGMA_FLOOR: f64 = 1e-3;

/// Spacing of the ODE grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeGrid {
    /// Uniform in t = σ².
    #[default]
    SquaredSigma,
    /// Geometric in σ.
    Geometric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    /// Overrides the schedule's DC step count J when set.
    pub dc_steps: Option<usize>,
    /// Every Gaussian draw becomes 0.
    pub zero_noise: bool,
    pub backend: BackendConfig,
    pub ode_steps: usize,
    pub integrator: IntegratorConfig,
    pub grid: OdeGrid,
    /// Keep every DC iterate in the trace.
    pub record_dc_path: bool,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            dc_steps: None,
            zero_noise: false,
            backend: BackendConfig::Tweedie,
            ode_steps: 10,
            integrator: IntegratorConfig::Euler,
            grid: OdeGrid::SquaredSigma,
            record_dc_path: false,
        }
    }
}

impl DenoiserConfig {
    pub fn from_solver(cfg: &SolverConfig) -> Self {
        Self {
            zero_noise: cfg.zero_noise,
            backend: cfg.backend,
            ode_steps: cfg.ode_steps,
            integrator: cfg.ode_integrator,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ode_steps == 0 {
            return Err(AcdcError::invalid("ode_steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseTrace<T> {
    pub z_tilde: Signal<T>,
    pub z_ac: Signal<T>,
    pub z_dc: Signal<T>,
    pub z_out: Signal<T>,
    pub sigma: T,
    pub sigma_s: T,
    pub eta: T,
    pub dc_steps: usize,
    pub dc_path: Option<Vec<Signal<T>>>,
    pub zero_noise: bool,
    /// σ_s² ≥ 1/M_σ for the model's known smoothness constant.
    pub dc_condition_violated: bool,
}

/// z̃ + σ n.
pub fn ac_step<T: Real>(
    z_tilde: &Signal<T>,
    sigma: T,
    noise: &mut dyn GaussianSource,
) -> Result<Signal<T>> {
    if !(sigma >= T::zero()) {
        return Err(AcdcError::invalid(format!(
            "AC noise level must be nonnegative, got {sigma}"
        )));
    }
    let n: Signal<T> = draw_signal(noise, z_tilde.len());
    let mut out = z_tilde.clone();
    out.axpy(sigma, &n);
    Ok(out)
}

/// M_σ ≤ M/(1 + Mσ²) and the DC condition σ_s² < 1/M_σ.
pub fn dc_condition_holds<T: Real>(
    model: &dyn ScoreModel<T>,
    sigma: T,
    sigma_s: T,
) -> Option<bool> {
    let m = model.smoothness()?;
    let m_sigma = m / (T::one() + m * sigma * sigma);
    Some(sigma_s * sigma_s * m_sigma < T::one())
}

/// J Langevin steps on log p(w | z_ac) ≈ −‖z_ac − w‖²/(2σ_s²) + log p_σ(w),
/// started at w⁰ = z_ac.
pub fn dc_step<T: Real>(
    z_ac: &Signal<T>,
    model: &dyn ScoreModel<T>,
    sigma: T,
    sigma_s: T,
    eta: T,
    dc_steps: usize,
    noise: &mut dyn GaussianSource,
) -> Result<Signal<T>> {
    dc_walk(z_ac, model, sigma, sigma_s, eta, dc_steps, noise, None)
}

#[allow(clippy::too_many_arguments)]
fn dc_walk<T: Real>(
    z_ac: &Signal<T>,
    model: &dyn ScoreModel<T>,
    sigma: T,
    sigma_s: T,
    eta: T,
    dc_steps: usize,
    noise: &mut dyn GaussianSource,
    mut path: Option<&mut Vec<Signal<T>>>,
) -> Result<Signal<T>> {
    if dc_steps == 0 {
        return Ok(z_ac.clone());
    }
    if !(sigma_s > T::zero() && eta > T::zero()) {
        return Err(AcdcError::invalid(format!(
            "DC steps need σ_s > 0 and η > 0, got σ_s = {sigma_s}, η = {eta}"
        )));
    }
    if dc_condition_holds(model, sigma, sigma_s) == Some(false) {
        debug!("DC condition σ_s² < 1/M_σ violated at σ = {sigma}, σ_s = {sigma_s}");
    }
    let inv_s2 = T::one() / (sigma_s * sigma_s);
    let kick = (lit::<T>(2.0) * eta).sqrt();
    let mut w = z_ac.clone();
    for step in 1..=dc_steps {
        let mut drift = model.score(&w, sigma);
        drift.axpy(inv_s2, &(z_ac - &w));
        w.axpy(eta, &drift);
        if !noise.is_silent() {
            let n: Signal<T> = draw_signal(noise, w.len());
            w.axpy(kick, &n);
        }
        if !w.is_finite() {
            return Err(AcdcError::Divergence { stage: "dc", step });
        }
        if let Some(p) = path.as_deref_mut() {
            p.push(w.clone());
        }
    }
    Ok(w)
}

/// z + σ² s(z, σ).
pub fn tweedie_denoise<T: Real>(
    z: &Signal<T>,
    model: &dyn ScoreModel<T>,
    sigma: T,
) -> Result<Signal<T>> {
    if !(sigma >= T::zero()) {
        return Err(AcdcError::invalid(format!(
            "σ must be nonnegative, got {sigma}"
        )));
    }
    if sigma == T::zero() {
        return Ok(z.clone());
    }
    let mut out = z.clone();
    out.axpy(sigma * sigma, &model.score(z, sigma));
    out.checked("tweedie")
}

/// Integrates the probability-flow ODE dz/dσ = −σ s(z, σ) from `sigma_start`
/// down to [`ODE_SIGMA_FLOOR`], then hops to σ = 0 with Tweedie.
pub fn ode_denoise<T: Real>(
    z: &Signal<T>,
    model: &dyn ScoreModel<T>,
    sigma_start: T,
    steps: usize,
    integrator: IntegratorConfig,
    grid: OdeGrid,
) -> Result<Signal<T>> {
    if steps == 0 {
        return Err(AcdcError::invalid("ODE denoiser needs at least one step"));
    }
    if !(sigma_start >= T::zero()) {
        return Err(AcdcError::invalid(format!(
            "σ must be nonnegative, got {sigma_start}"
        )));
    }
    let floor: T = lit(ODE_SIGMA_FLOOR);
    if sigma_start <= floor {
        return tweedie_denoise(z, model, sigma_start);
    }
    let half: T = lit(0.5);
    let n: T = from_usize(steps);
    // Work in t = σ², where dz/dt = −½ s(z, √t).
    let ts: Vec<T> = (0..=steps)
        .map(|i| {
            let f = from_usize::<T>(i) / n;
            match grid {
                OdeGrid::SquaredSigma => {
                    let (a, b) = (sigma_start * sigma_start, floor * floor);
                    a + (b - a) * f
                }
                OdeGrid::Geometric => {
                    let s = sigma_start * (floor / sigma_start).powf(f);
                    s * s
                }
            }
        })
        .collect();
    let slope = |z: &Signal<T>, t: T| model.score(z, t.sqrt()).scale(-half);
    let mut z = z.clone();
    for (step, w) in ts.windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let dt = t1 - t0;
        let k0 = slope(&z, t0);
        match integrator {
            IntegratorConfig::Euler => z.axpy(dt, &k0),
            IntegratorConfig::Heun => {
                let mut pred = z.clone();
                pred.axpy(dt, &k0);
                let k1 = slope(&pred, t1);
                z.axpy(dt * half, &(&k0 + &k1));
            }
        }
        if !z.is_finite() {
            return Err(AcdcError::Divergence {
                stage: "ode",
                step: step + 1,
            });
        }
    }
    tweedie_denoise(&z, model, floor)
}

/// Full AC → DC → read-out pipeline for one schedule slice. AC and DC draw
/// from separate sources so runs can share AC noise while varying DC.
pub fn acdc_denoise<T: Real>(
    z_tilde: &Signal<T>,
    model: &dyn ScoreModel<T>,
    slice: &ScheduleSlice<T>,
    cfg: &DenoiserConfig,
    ac_noise: &mut dyn GaussianSource,
    dc_noise: &mut dyn GaussianSource,
) -> Result<(Signal<T>, DenoiseTrace<T>)> {
    cfg.validate()?;
    z_tilde.ensure_len(model.dim())?;
    let (mut silent_ac, mut silent_dc) = (ZeroNoise, ZeroNoise);
    let (ac_src, dc_src): (&mut dyn GaussianSource, &mut dyn GaussianSource) = if cfg.zero_noise {
        (&mut silent_ac, &mut silent_dc)
    } else {
        (ac_noise, dc_noise)
    };
    let j = cfg.dc_steps.unwrap_or(slice.dc_steps);
    let z_ac = ac_step(z_tilde, slice.sigma, ac_src)?;
    let mut path = cfg.record_dc_path.then(Vec::new);
    let z_dc = dc_walk(
        &z_ac,
        model,
        slice.sigma,
        slice.sigma_s,
        slice.eta,
        j,
        dc_src,
        path.as_mut(),
    )?;
    let z_out = match cfg.backend {
        BackendConfig::Tweedie => tweedie_denoise(&z_dc, model, slice.sigma)?,
        BackendConfig::Ode => ode_denoise(
            &z_dc,
            model,
            slice.sigma,
            cfg.ode_steps,
            cfg.integrator,
            cfg.grid,
        )?,
    };
    let trace = DenoiseTrace {
        z_tilde: z_tilde.clone(),
        z_ac,
        z_dc,
        z_out: z_out.clone(),
        sigma: slice.sigma,
        sigma_s: slice.sigma_s,
        eta: slice.eta,
        dc_steps: j,
        dc_path: path,
        zero_noise: cfg.zero_noise,
        dc_condition_violated: j > 0
            && dc_condition_holds(model, slice.sigma, slice.sigma_s) == Some(false),
    };
    Ok((z_out, trace))
}

/// ‖z̃ − x_ref‖² / (2σ²): KL between N(z̃, σ²I) and N(x_ref, σ²I).
pub fn kl_gap<T: Real>(z_tilde: &Signal<T>, clean_reference: &Signal<T>, sigma: T) -> Result<T> {
    if !(sigma > T::zero()) {
        return Err(AcdcError::invalid("KL gap needs σ > 0"));
    }
    z_tilde.ensure_len(clean_reference.len())?;
    Ok(z_tilde.dist(clean_reference).powi(2) / (lit::<T>(2.0) * sigma * sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::GaussianMixture;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    fn gaussian(mu: f64, s: f64, d: usize) -> GaussianMixture<f64> {
        GaussianMixture::gaussian(Signal::filled(d, mu), s).unwrap()
    }

    fn v(xs: &[f64]) -> Signal<f64> {
        Signal::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn ac_examples() {
        let z = v(&[1.0, 2.0]);
        let mut s = RandomStream::new(1);
        assert_eq!(ac_step(&z, 0.0, &mut s).unwrap(), z);
        assert_eq!(ac_step(&z, 7.0, &mut ZeroNoise).unwrap(), z);
        assert!(ac_step(&z, -1.0, &mut s).is_err());
    }

    #[test]
    fn dc_zero_steps_is_identity() {
        let g = gaussian(0.0, 1.0, 3);
        let z = v(&[1.0, -1.0, 0.5]);
        let mut s = RandomStream::new(2);
        assert_eq!(dc_step(&z, &g, 0.5, 0.0, 0.0, 0, &mut s).unwrap(), z);
    }

    #[test]
    fn dc_single_noiseless_step() {
        let (mu, s, sigma, sigma_s, eta) = (0.4, 1.3, 0.7, 0.5, 1e-2);
        let g = gaussian(mu, s, 2);
        let z_ac = v(&[2.0, -1.0]);
        let w1 = dc_step(&z_ac, &g, sigma, sigma_s, eta, 1, &mut ZeroNoise).unwrap();
        for i in 0..2 {
            // w₀ = z_ac, so the proximity pull vanishes on the first step.
            let expect = z_ac[i] + eta * (0.0 - (z_ac[i] - mu) / (s * s + sigma * sigma));
            assert_relative_eq!(w1[i], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn dc_reports_divergence_step() {
        let g = gaussian(0.0, 1.0, 2);
        let z = v(&[1.0, 1.0]);
        let err = dc_step(&z, &g, 0.0, 1e-4, 1.0, 50, &mut ZeroNoise).unwrap_err();
        match err {
            AcdcError::Divergence { stage, step } => {
                assert_eq!(stage, "dc");
                assert!(step > 1 && step <= 50);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn tweedie_examples() {
        let g = gaussian(0.0, 1.0, 2);
        let z = v(&[2.0, 0.0]);
        assert_eq!(tweedie_denoise(&z, &g, 0.0).unwrap(), z);
        let out = tweedie_denoise(&z, &g, 1.0).unwrap();
        assert_relative_eq!(out[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tweedie_matches_mmse_oracle() {
        let gmm = GaussianMixture::new(
            vec![0.3, 0.7],
            vec![v(&[-1.0, 0.5]), v(&[1.0, -0.2])],
            vec![0.4, 0.8],
        )
        .unwrap();
        let mut s = RandomStream::new(3);
        for sigma in [0.05, 0.3, 1.0, 4.0] {
            for _ in 0..50 {
                let z: Signal<f64> = s.normal_signal(2).scale(2.0);
                let a = tweedie_denoise(&z, &gmm, sigma).unwrap();
                let b = gmm.mmse_denoise(&z, sigma);
                assert!(a.dist(&b) <= 1e-10);
            }
        }
    }

    fn closed_form(z0: f64, s: f64, sigma_start: f64) -> f64 {
        z0 * s / (s * s + sigma_start * sigma_start).sqrt()
    }

    #[test]
    fn ode_hits_closed_form_and_converges_first_order() {
        let g = gaussian(0.0, 1.0, 2);
        let z = v(&[2.0, 0.0]);
        let exact = closed_form(2.0, 1.0, 1.0);
        let err = |steps| {
            let out = ode_denoise(
                &z,
                &g,
                1.0,
                steps,
                IntegratorConfig::Euler,
                OdeGrid::SquaredSigma,
            )
            .unwrap();
            assert_eq!(out[1], 0.0);
            (out[0] - exact).abs() / exact
        };
        assert!(err(100) < 1e-3, "{}", err(100));
        for steps in [10, 20, 40, 80] {
            assert!(err(steps) <= 2.0 * err(2 * steps) * 1.05 && err(2 * steps) < err(steps));
        }
    }

    #[test]
    fn ode_heun_beats_euler_and_geometric_grid_works() {
        let g = gaussian(0.5, 0.8, 1);
        let z = v(&[3.0]);
        let exact = 0.5 + 2.5 * 0.8 / (0.64f64 + 4.0).sqrt();
        let run = |i, grid| ode_denoise(&z, &g, 2.0, 40, i, grid).unwrap()[0];
        let e_euler = (run(IntegratorConfig::Euler, OdeGrid::SquaredSigma) - exact).abs();
        let e_heun = (run(IntegratorConfig::Heun, OdeGrid::SquaredSigma) - exact).abs();
        assert!(e_heun < e_euler / 10.0);
        let e_geo = (run(IntegratorConfig::Euler, OdeGrid::Geometric) - exact).abs();
        assert!(e_geo > e_euler && e_geo < 0.06);
    }

    #[test]
    fn ode_small_sigma_is_identity() {
        let g = gaussian(0.0, 1.0, 2);
        let z = v(&[2.0, -1.0]);
        let out = ode_denoise(
            &z,
            &g,
            1e-9,
            10,
            IntegratorConfig::Euler,
            OdeGrid::SquaredSigma,
        )
        .unwrap();
        assert!(out.dist(&z) < 1e-15);
        assert!(ode_denoise(
            &z,
            &g,
            1.0,
            0,
            IntegratorConfig::Euler,
            OdeGrid::SquaredSigma
        )
        .is_err());
    }

    #[test]
    fn acdc_degenerate_modes() {
        let g = gaussian(0.3, 1.0, 3);
        let z = v(&[1.0, 2.0, -3.0]);
        let cfg = DenoiserConfig {
            zero_noise: true,
            dc_steps: Some(0),
            ..Default::default()
        };
        let slice0 = ScheduleSlice {
            k: 0,
            sigma: 0.0,
            sigma_s: 0.0,
            eta: 0.0,
            dc_steps: 10,
        };
        let mut s1 = RandomStream::new(1);
        let mut s2 = RandomStream::new(2);
        let (out, tr) = acdc_denoise(&z, &g, &slice0, &cfg, &mut s1, &mut s2).unwrap();
        assert_eq!(out, z);
        assert!(tr.zero_noise);
        let slice = ScheduleSlice {
            sigma: 0.8,
            ..slice0
        };
        let (out, _) = acdc_denoise(&z, &g, &slice, &cfg, &mut s1, &mut s2).unwrap();
        assert_eq!(out, tweedie_denoise(&z, &g, 0.8).unwrap());
        // Zero-noise mode never touches the streams.
        assert_eq!(s1.position(), 0);
    }

    #[test]
    fn kl_gap_examples() {
        let a = v(&[2.0, 2.0]);
        let b = v(&[0.0, 0.0]);
        assert_eq!(kl_gap(&a, &a, 1.0).unwrap(), 0.0);
        assert_relative_eq!(kl_gap(&a, &b, 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(kl_gap(&a, &b, 4.0).unwrap(), 0.25, epsilon = 1e-15);
        assert!(kl_gap(&a, &b, 0.0).is_err());
    }
}
