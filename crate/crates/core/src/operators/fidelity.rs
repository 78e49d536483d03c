use std::sync::Arc;

use super::ForwardOperator;
use crate::config::InnerConfig;
use crate::error::{AcdcError, Result};
use crate::scalar::{lit, to_f64, Real};
use crate::signal::Signal;

/// ℓ(x) = ‖y − A(x)‖² / (2σ_n²).
#[derive(Clone, Debug)]
pub struct DataFidelity<T: Real> {
    y: Signal<T>,
    sigma_n: T,
    op: Arc<dyn ForwardOperator<T>>,
}

impl<T: Real> DataFidelity<T> {
    pub fn new(y: Signal<T>, sigma_n: T, op: Arc<dyn ForwardOperator<T>>) -> Result<Self> {
        if !(sigma_n > T::zero()) || !sigma_n.is_finite() {
            return Err(AcdcError::invalid(
                "measurement noise level must be positive",
            ));
        }
        y.ensure_len(op.output_dim())?;
        Ok(Self { y, sigma_n, op })
    }

    pub fn observation(&self) -> &Signal<T> {
        &self.y
    }

    pub fn sigma_n(&self) -> T {
        self.sigma_n
    }

    pub fn operator(&self) -> &Arc<dyn ForwardOperator<T>> {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.input_dim()
    }

    fn residual(&self, x: &Signal<T>) -> Signal<T> {
        &self.op.apply(x) - &self.y
    }

    pub fn loss(&self, x: &Signal<T>) -> T {
        self.residual(x).norm_sq() / (lit::<T>(2.0) * self.sigma_n * self.sigma_n)
    }

    pub fn grad(&self, x: &Signal<T>) -> Signal<T> {
        let r = self
            .residual(x)
            .scale(T::one() / (self.sigma_n * self.sigma_n));
        self.op.vjp(x, &r)
    }

    pub fn loss_and_grad(&self, x: &Signal<T>) -> (T, Signal<T>) {
        let r = self.residual(x);
        let inv = T::one() / (self.sigma_n * self.sigma_n);
        let loss = r.norm_sq() * inv / lit(2.0);
        (loss, self.op.vjp(x, &r.scale(inv)))
    }

    /// Strong-convexity modulus λ_min(AᵀA)/σ_n² of ℓ, linear operators only.
    pub fn strong_convexity(&self) -> Option<f64> {
        let s = to_f64(self.sigma_n);
        super::gram_min_eigenvalue(self.op.as_ref()).map(|l| l / (s * s))
    }
}

#[derive(Clone, Debug)]
pub struct InnerSettings {
    pub max_iters: usize,
    pub lr: f64,
    pub delta_tol: f64,
    pub window: usize,
    pub cg_tol: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerConfig::default().into()
    }
}

impl From<InnerConfig> for InnerSettings {
    fn from(c: InnerConfig) -> Self {
        Self {
            max_iters: c.max_iters,
            lr: c.lr,
            delta_tol: c.delta_tol,
            window: c.window,
            cg_tol: c.cg_tol,
        }
    }
}

impl From<&InnerConfig> for InnerSettings {
    fn from(c: &InnerConfig) -> Self {
        c.clone().into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct XSolveInfo {
    pub iterations: usize,
    /// CG residual (linear) or final gradient norm of the objective (Adam).
    pub residual: f64,
    pub early_stopped: bool,
}

/// argmin_x (1/ρ)ℓ(x) + ½‖x − z + u‖².
///
/// Linear operators go through conjugate gradient on
/// (AᵀA/(ρσ_n²) + I)x = Aᵀy/(ρσ_n²) + z − u, warm-started at `warm` when
/// given. Nonlinear operators use Adam from `warm` (or z − u) and return the
/// best iterate seen.
pub fn solve_x_subproblem<T: Real>(
    f: &DataFidelity<T>,
    z: &Signal<T>,
    u: &Signal<T>,
    rho: T,
    settings: &InnerSettings,
    warm: Option<&Signal<T>>,
) -> Result<(Signal<T>, XSolveInfo)> {
    if !(rho > T::zero()) || !rho.is_finite() {
        return Err(AcdcError::invalid(format!("ρ must be positive, got {rho}")));
    }
    let d = f.dim();
    z.ensure_len(d)?;
    u.ensure_len(d)?;
    let v = z - u;
    if f.op.is_linear() {
        conjugate_gradient(f, &v, rho, settings.cg_tol, warm.unwrap_or(&v))
    } else {
        adam(f, &v, rho, settings, warm.unwrap_or(&v))
    }
}

fn conjugate_gradient<T: Real>(
    f: &DataFidelity<T>,
    v: &Signal<T>,
    rho: T,
    tol: f64,
    x0: &Signal<T>,
) -> Result<(Signal<T>, XSolveInfo)> {
    let d = f.dim();
    let w = T::one() / (rho * f.sigma_n * f.sigma_n);
    let op = f.op.as_ref();
    let apply_h = |p: &Signal<T>| {
        let mut out = op.vjp(p, &op.apply(p)).scale(w);
        out.axpy(T::one(), p);
        out
    };
    let mut b = op.vjp(v, &f.y).scale(w);
    b.axpy(T::one(), v);
    // Single precision cannot reach 1e-8; floor the target a little above
    // the rounding level.
    let tol = tol.max(64.0 * to_f64(T::epsilon()));
    let target = lit::<T>(tol) * (T::one() + b.norm());

    let mut x = x0.clone();
    let mut r = &b - &apply_h(&x);
    let mut p = r.clone();
    let mut rs = r.norm_sq();
    let mut it = 0;
    // Exact arithmetic terminates within d steps; a few extra absorb rounding.
    let cap = d + 5;
    while rs.sqrt() > target {
        if it >= cap {
            return Err(AcdcError::CgNotConverged {
                iterations: it,
                residual: to_f64(rs.sqrt()),
            });
        }
        let hp = apply_h(&p);
        let alpha = rs / p.dot(&hp);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &hp);
        let rs_new = r.norm_sq();
        p = r.zip_map(&p, |ri, pi| ri + (rs_new / rs) * pi);
        rs = rs_new;
        it += 1;
    }
    let x = x.checked("x-update")?;
    Ok((
        x,
        XSolveInfo {
            iterations: it,
            residual: to_f64(rs.sqrt()),
            early_stopped: false,
        },
    ))
}

fn adam<T: Real>(
    f: &DataFidelity<T>,
    v: &Signal<T>,
    rho: T,
    s: &InnerSettings,
    x0: &Signal<T>,
) -> Result<(Signal<T>, XSolveInfo)> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let lr: T = lit(s.lr);
    let inv_rho = T::one() / rho;
    let objective = |x: &Signal<T>| {
        let (l, g) = f.loss_and_grad(x);
        let diff = x - v;
        let mut grad = g.scale(inv_rho);
        grad.axpy(T::one(), &diff);
        (l * inv_rho + diff.norm_sq() / lit(2.0), grad)
    };

    let d = f.dim();
    let mut x = x0.clone();
    let mut m = vec![0.0f64; d];
    let mut m2 = vec![0.0f64; d];
    let (mut prev, mut grad) = objective(&x);
    let mut best = (prev, x.clone(), grad.norm());
    let mut rises = 0usize;
    let mut early = false;
    let mut it = 0;
    while it < s.max_iters {
        it += 1;
        let c1 = 1.0 - b1.powi(it as i32);
        let c2 = 1.0 - b2.powi(it as i32);
        let xs = x.as_mut_slice();
        for i in 0..d {
            let g = to_f64(grad[i]);
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
            let step = (m[i] / c1) / ((m2[i] / c2).sqrt() + eps);
            xs[i] -= lr * lit::<T>(step);
        }
        let (val, g) = objective(&x);
        if !val.is_finite() {
            return Err(AcdcError::Divergence {
                stage: "x-update",
                step: it,
            });
        }
        grad = g;
        if val < best.0 {
            best = (val, x.clone(), grad.norm());
        }
        if val - prev > lit(s.delta_tol) {
            rises += 1;
            if rises >= s.window {
                early = true;
                break;
            }
        } else {
            rises = 0;
        }
        prev = val;
    }
    Ok((
        best.1,
        XSolveInfo {
            iterations: it,
            residual: to_f64(best.2),
            early_stopped: early,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{FourierMagnitude, HdrClip, Identity, SubsampleMask};
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    fn identity_fid(y: Signal<f64>, sigma_n: f64) -> DataFidelity<f64> {
        let d = y.len();
        DataFidelity::new(y, sigma_n, Arc::new(Identity::new(d))).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let y = Signal::new(vec![1.0, 2.0, 3.0]).unwrap();
        let f = identity_fid(y.clone(), 0.05);
        assert_eq!(f.grad(&y), Signal::zeros(3));
        assert_eq!(f.loss(&y), 0.0);
        let f1 = identity_fid(y.clone(), 1.0);
        let mut x = y.clone();
        x.as_mut_slice()[0] += 1.0;
        assert_eq!(f1.grad(&x), Signal::basis(3, 0));
        assert_eq!(f1.loss(&x), 0.5);
    }

    #[test]
    fn identity_closed_form() {
        let y = Signal::new(vec![0.3, -1.0, 2.0]).unwrap();
        let z = Signal::new(vec![1.0, 1.0, -1.0]).unwrap();
        let u = Signal::new(vec![0.1, 0.0, 0.2]).unwrap();
        let (rho, sn) = (7.0, 0.5);
        let f = identity_fid(y.clone(), sn);
        let (x, _) = solve_x_subproblem(&f, &z, &u, rho, &InnerSettings::default(), None).unwrap();
        let w = 1.0 / (rho * sn * sn);
        for i in 0..3 {
            assert_relative_eq!(x[i], (y[i] * w + z[i] - u[i]) / (w + 1.0), epsilon = 1e-10);
        }
    }

    #[test]
    fn large_rho_and_consistent_target() {
        let y = Signal::new(vec![0.3, -1.0, 2.0]).unwrap();
        let f = identity_fid(y.clone(), 0.05);
        let z = Signal::new(vec![5.0, 5.0, 5.0]).unwrap();
        let u = Signal::zeros(3);
        let (x, _) = solve_x_subproblem(&f, &z, &u, 1e12, &InnerSettings::default(), None).unwrap();
        assert!(x.dist(&z) < 1e-6);
        for rho in [0.01, 1.0, 1e4] {
            let (x, _) =
                solve_x_subproblem(&f, &y, &u, rho, &InnerSettings::default(), None).unwrap();
            assert!(x.dist(&y) < 1e-10);
        }
        assert!(solve_x_subproblem(&f, &y, &u, 0.0, &InnerSettings::default(), None).is_err());
    }

    #[test]
    fn cg_reaches_optimality_for_mask() {
        let mut s = RandomStream::new(8);
        let d = 40;
        let op = Arc::new(SubsampleMask::<f64>::random(d, 0.3, &mut s).unwrap());
        let y = s.normal_signal(op.kept().len());
        let f = DataFidelity::new(y, 0.05, op).unwrap();
        let z: Signal<f64> = s.normal_signal(d);
        let u: Signal<f64> = s.normal_signal(d);
        let rho = 100.0;
        let (x, info) =
            solve_x_subproblem(&f, &z, &u, rho, &InnerSettings::default(), None).unwrap();
        let mut g = f.grad(&x).scale(1.0 / rho);
        g.axpy(1.0, &(&x - &(&z - &u)));
        assert!(g.norm() <= 1e-6 * (1.0 + x.norm()), "{}", g.norm());
        assert!(info.iterations <= d + 5);
    }

    #[test]
    fn adam_decreases_objective_for_hdr() {
        let mut s = RandomStream::new(9);
        let d = 16;
        let op: Arc<dyn ForwardOperator<f64>> = Arc::new(HdrClip::new(d, 2.0).unwrap());
        let truth = Signal::from_fn(d, |i| 0.1 + 0.02 * i as f64);
        let y = op.apply(&truth);
        let f = DataFidelity::new(y, 0.05, op).unwrap();
        // Start inside the unclipped range; saturated entries get no gradient.
        let z: Signal<f64> = s.normal_signal(d).scale(0.05).map(|v| v + 0.25);
        let u = Signal::zeros(d);
        let rho = 100.0;
        let obj = |x: &Signal<f64>| f.loss(x) / rho + 0.5 * x.dist(&z).powi(2);
        let settings = InnerSettings {
            lr: 0.01,
            ..Default::default()
        };
        let (x, _) = solve_x_subproblem(&f, &z, &u, rho, &settings, None).unwrap();
        assert!(obj(&x) < 0.5 * obj(&z));
    }

    #[test]
    fn adam_early_stop_triggers_on_rising_loss() {
        let d = 8;
        let op: Arc<dyn ForwardOperator<f64>> = Arc::new(FourierMagnitude::new(d, 2).unwrap());
        let mut s = RandomStream::new(10);
        let y = op.apply(&s.normal_signal(d));
        let f = DataFidelity::new(y, 0.05, op).unwrap();
        let z: Signal<f64> = s.normal_signal(d);
        let settings = InnerSettings {
            lr: 50.0,
            ..Default::default()
        };
        let (_, info) =
            solve_x_subproblem(&f, &z, &Signal::zeros(d), 1.0, &settings, None).unwrap();
        assert!(info.early_stopped);
        assert!(info.iterations < 1000);
    }

    #[test]
    fn fidelity_gradients_match_finite_differences() {
        let mut s = RandomStream::new(11);
        let d = 12;
        let ops: Vec<Arc<dyn ForwardOperator<f64>>> = vec![
            Arc::new(Identity::new(d)),
            Arc::new(SubsampleMask::random(d, 0.5, &mut s).unwrap()),
            Arc::new(FourierMagnitude::new(d, 2).unwrap()),
        ];
        for op in ops {
            let y = s.normal_signal(op.output_dim());
            let f = DataFidelity::new(y, 0.3, op).unwrap();
            let x: Signal<f64> = s.normal_signal(d);
            let g = f.grad(&x);
            let h = 1e-6;
            for i in 0..d {
                let mut p = x.clone();
                let mut m = x.clone();
                p.as_mut_slice()[i] += h;
                m.as_mut_slice()[i] -= h;
                let fd = (f.loss(&p) - f.loss(&m)) / (2.0 * h);
                assert!(
                    (g[i] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "{}: {} vs {fd}",
                    f.op.name(),
                    g[i]
                );
            }
        }
    }

    #[test]
    fn strong_convexity_of_identity() {
        let f = identity_fid(Signal::zeros(4), 0.05);
        assert_relative_eq!(f.strong_convexity().unwrap(), 400.0, epsilon = 1e-9);
    }
}
