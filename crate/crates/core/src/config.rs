//! JSON experiment configuration.
//!
//! Top-level keys: `problem`, `prior`, `schedule`, `solver`, `seed`,
//! `output`, plus an optional `diagnostics` block read by `acdc diagnose`.
//! Unknown keys are rejected at every level.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AcdcError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub prior: PriorConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsConfig>,
}

fn default_output() -> String {
    "out".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Signal dimension d.
    pub dim: usize,
    /// Measurement noise standard deviation σ_n.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    pub operator: OperatorConfig,
}

fn default_noise_std() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Identity,
    /// Keep each entry independently with probability `keep`.
    RandomMask {
        keep: f64,
    },
    /// Drop the contiguous block `start..start + len`.
    BoxMask {
        start: usize,
        len: usize,
    },
    /// Circular convolution.
    Convolution {
        kernel: KernelConfig,
    },
    /// Anti-aliased decimation by `factor` (cubic kernel).
    Decimation {
        factor: usize,
    },
    /// Dense `rows × d` projection with N(0, 1/rows) entries.
    GaussianProjection {
        rows: usize,
    },
    /// clip(scale · x, 0, 1).
    Hdr {
        #[serde(default = "default_hdr_scale")]
        scale: f64,
    },
    /// |F x_pad| with zero-padding to `oversampling · d`.
    PhaseRetrieval {
        #[serde(default = "default_oversampling")]
        oversampling: usize,
    },
}

fn default_hdr_scale() -> f64 {
    2.0
}

fn default_oversampling() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Sampled Gaussian; `std` defaults to the 61-tap/σ=3 ratio rescaled to `taps`.
    Gaussian {
        taps: usize,
        #[serde(default)]
        std: Option<f64>,
    },
    /// One-sided exponentially decaying smear.
    Motion {
        taps: usize,
        #[serde(default)]
        decay: Option<f64>,
    },
    Inline(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "d_sigma_max")]
    pub sigma_max: f64,
    #[serde(default = "d_sigma_min")]
    pub sigma_min: f64,
    #[serde(rename = "W", default = "d_window")]
    pub window: usize,
    #[serde(default = "d_tail")]
    pub tail: usize,
    #[serde(rename = "J", default = "d_dc_steps")]
    pub dc_steps: usize,
    #[serde(default = "d_eta_coeff")]
    pub eta_coeff: f64,
    #[serde(default = "d_sigma_s_coeff")]
    pub sigma_s_coeff: f64,
    #[serde(default = "d_eta_prob")]
    pub eta_prob: f64,
}

fn d_sigma_max() -> f64 {
    10.0
}
fn d_sigma_min() -> f64 {
    0.1
}
fn d_window() -> usize {
    100
}
fn d_tail() -> usize {
    10
}
fn d_dc_steps() -> usize {
    10
}
fn d_eta_coeff() -> f64 {
    5e-4
}
fn d_sigma_s_coeff() -> f64 {
    0.1
}
fn d_eta_prob() -> f64 {
    0.05
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            sigma_max: d_sigma_max(),
            sigma_min: d_sigma_min(),
            window: d_window(),
            tail: d_tail(),
            dc_steps: d_dc_steps(),
            eta_coeff: d_eta_coeff(),
            sigma_s_coeff: d_sigma_s_coeff(),
            eta_prob: d_eta_prob(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Admm,
    Diffpir,
    Snore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Tweedie,
    Ode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorConfig {
    #[default]
    Euler,
    Heun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub method: Method,
    /// Initial (or fixed) penalty ρ₀.
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default)]
    pub adaptive_rho: bool,
    /// ρ multiplier γ_ρ > 1 of the adaptive rule.
    #[serde(default = "d_gamma_rho")]
    pub gamma_rho: f64,
    /// Residue-decrease threshold η_β ∈ [0, 1).
    #[serde(default = "d_eta_beta")]
    pub eta_beta: f64,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "d_ode_steps")]
    pub ode_steps: usize,
    #[serde(default)]
    pub ode_integrator: IntegratorConfig,
    /// Replace every Gaussian draw in the denoiser with 0.
    #[serde(default)]
    pub zero_noise: bool,
    #[serde(default)]
    pub inner: InnerConfig,
    /// DiffPIR noise-mixing coefficient ζ ∈ [0, 1].
    #[serde(default = "d_zeta")]
    pub zeta: f64,
    /// DiffPIR coupling weight; defaults to `rho`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_hqs: Option<f64>,
    /// SNORE data step δ.
    #[serde(default = "d_snore_step")]
    pub snore_step: f64,
    /// SNORE regulariser step.
    #[serde(default = "d_snore_reg")]
    pub snore_reg: f64,
}

fn d_rho() -> f64 {
    100.0
}
fn d_gamma_rho() -> f64 {
    1.2
}
fn d_eta_beta() -> f64 {
    0.9
}
fn d_ode_steps() -> usize {
    10
}
fn d_zeta() -> f64 {
    0.3
}
fn d_snore_step() -> f64 {
    1e-3
}
fn d_snore_reg() -> f64 {
    0.5
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            rho: d_rho(),
            adaptive_rho: false,
            gamma_rho: d_gamma_rho(),
            eta_beta: d_eta_beta(),
            backend: BackendConfig::default(),
            ode_steps: d_ode_steps(),
            ode_integrator: IntegratorConfig::default(),
            zero_noise: false,
            inner: InnerConfig::default(),
            zeta: d_zeta(),
            mu_hqs: None,
            snore_step: d_snore_step(),
            snore_reg: d_snore_reg(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerConfig {
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    /// Adam learning rate (nonlinear operators).
    #[serde(default = "d_lr")]
    pub lr: f64,
    /// Early stop once the loss rises by more than this...
    #[serde(default = "d_delta_tol")]
    pub delta_tol: f64,
    /// ...for this many consecutive steps.
    #[serde(default = "d_window_inner")]
    pub window: usize,
    #[serde(default = "d_cg_tol")]
    pub cg_tol: f64,
}

fn d_max_iters() -> usize {
    1000
}
fn d_lr() -> f64 {
    0.1
}
fn d_delta_tol() -> f64 {
    0.1
}
fn d_window_inner() -> usize {
    3
}
fn d_cg_tol() -> f64 {
    1e-8
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            max_iters: d_max_iters(),
            lr: d_lr(),
            delta_tol: d_delta_tol(),
            window: d_window_inner(),
            cg_tol: d_cg_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "yes")]
    pub smoothness: bool,
    #[serde(default = "yes")]
    pub coercivity: bool,
    #[serde(default = "yes")]
    pub nonexpansive: bool,
    #[serde(default = "yes")]
    pub boundedness: bool,
    #[serde(default = "d_n_pairs")]
    pub n_pairs: usize,
    /// σ at which the smoothed-score Lipschitz ratio is sampled.
    #[serde(default)]
    pub smoothness_sigma: f64,
    #[serde(default = "d_scales")]
    pub coercivity_scales: Vec<f64>,
    /// Schedule iterations to test; empty selects up to five admissible ones.
    #[serde(default)]
    pub points: Vec<usize>,
    /// Truncation diameter D of the test domain (for L = M·D + S).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_diameter: Option<f64>,
}

fn yes() -> bool {
    true
}
fn d_n_pairs() -> usize {
    500
}
fn d_scales() -> Vec<f64> {
    vec![1.0, 1.5, 2.0, 3.0]
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            smoothness: true,
            coercivity: true,
            nonexpansive: true,
            boundedness: true,
            n_pairs: d_n_pairs(),
            smoothness_sigma: 0.0,
            coercivity_scales: d_scales(),
            points: Vec::new(),
            domain_diameter: None,
        }
    }
}

/// Parse failure with the 1-based position serde reports.
#[derive(Debug, thiserror::Error)]
#[error("{message} at line {line} column {column}")]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends the position itself; keep it only in the fields.
        let text = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        ParseError {
            message: text.strip_suffix(&suffix).unwrap_or(&text).to_string(),
            line: e.line(),
            column: e.column(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> std::result::Result<Self, ParseError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses, applies `path=value` overrides, then deserialises.
    pub fn from_json_with_overrides(
        text: &str,
        overrides: &[String],
    ) -> std::result::Result<Self, ParseError> {
        let mut value: Value = serde_json::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o).map_err(|e| ParseError {
                message: e.to_string(),
                line: 0,
                column: 0,
            })?;
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.problem.dim;
        if d == 0 {
            return Err(AcdcError::Config("problem.dim must be positive".into()));
        }
        if !(self.problem.noise_std > 0.0) {
            return Err(AcdcError::Config(
                "problem.noise_std must be positive".into(),
            ));
        }
        let p = &self.prior;
        let m = p.weights.len();
        if m == 0 || p.means.len() != m || p.stds.len() != m {
            return Err(AcdcError::Config(
                "prior.weights, prior.means and prior.stds must have equal nonzero length".into(),
            ));
        }
        if let Some(bad) = p.means.iter().find(|mu| mu.len() != d) {
            return Err(AcdcError::Config(format!(
                "prior mean has length {}, problem.dim is {d}",
                bad.len()
            )));
        }
        let s = &self.solver;
        if !(s.rho > 0.0) {
            return Err(AcdcError::Config("solver.rho must be positive".into()));
        }
        if s.adaptive_rho {
            if !(s.gamma_rho > 1.0) {
                return Err(AcdcError::Config("solver.gamma_rho must exceed 1".into()));
            }
            if !(0.0..1.0).contains(&s.eta_beta) {
                return Err(AcdcError::Config(
                    "solver.eta_beta must lie in [0, 1)".into(),
                ));
            }
        }
        if !(0.0..=1.0).contains(&s.zeta) {
            return Err(AcdcError::Config("solver.zeta must lie in [0, 1]".into()));
        }
        if s.ode_steps == 0 {
            return Err(AcdcError::Config(
                "solver.ode_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Sets a dotted path (e.g. `schedule.W=5`) inside a JSON tree. The value is
/// parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| AcdcError::Config(format!("override `{assignment}` is not path=value")))?;
    let parsed: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(AcdcError::Config(format!("bad override path `{path}`")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            AcdcError::Config(format!("`{key}` in `{path}` is not inside an object"))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| {
        AcdcError::Config(format!("cannot set `{path}`: parent is not an object"))
    })?;
    obj.insert(keys[keys.len() - 1].to_string(), parsed);
    Ok(())
}
