//! Forward measurement operators A, the data-fidelity term ℓ, and the inner
//! solvers for the ADMM x-subproblem.

mod fidelity;
mod linear;
mod nonlinear;

use std::sync::Arc;

use nalgebra::DMatrix;

pub use fidelity::{solve_x_subproblem, DataFidelity, InnerSettings, XSolveInfo};
pub use linear::{
    cubic_kernel, gaussian_kernel, motion_kernel, CircularConvolution, Decimation, DenseProjection,
    Identity, SubsampleMask,
};
pub use nonlinear::{FourierMagnitude, HdrClip};

use crate::config::{KernelConfig, OperatorConfig};
use crate::error::{AcdcError, Result};
use crate::rng::RandomStream;
use crate::scalar::{lit, to_f64, Real};
use crate::signal::Signal;

/// A: R^d → R^n.
pub trait ForwardOperator<T: Real>: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn is_linear(&self) -> bool;

    fn apply(&self, x: &Signal<T>) -> Signal<T>;

    /// Vector-Jacobian product J_A(x)ᵀ v. For linear operators this is the
    /// adjoint and `x` is ignored.
    fn vjp(&self, x: &Signal<T>, v: &Signal<T>) -> Signal<T>;

    /// Aᵀ y for linear operators.
    fn adjoint(&self, y: &Signal<T>) -> Option<Signal<T>> {
        if self.is_linear() {
            Some(self.vjp(&Signal::zeros(self.input_dim()), y))
        } else {
            None
        }
    }

    /// Cheap measurement-informed starting point: Aᵀ y for linear operators.
    fn back_project(&self, y: &Signal<T>) -> Signal<T> {
        self.adjoint(y)
            .unwrap_or_else(|| Signal::zeros(self.input_dim()))
    }
}

/// Dense matrix of a linear operator, assembled column by column.
pub fn dense_matrix<T: Real>(op: &dyn ForwardOperator<T>) -> DMatrix<f64> {
    let d = op.input_dim();
    let n = op.output_dim();
    let mut m = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let col = op.apply(&Signal::basis(d, j));
        for i in 0..n {
            m[(i, j)] = to_f64(col[i]);
        }
    }
    m
}

/// λ_min(AᵀA) for a linear operator; `None` for nonlinear ones.
pub fn gram_min_eigenvalue<T: Real>(op: &dyn ForwardOperator<T>) -> Option<f64> {
    if !op.is_linear() {
        return None;
    }
    let a = dense_matrix(op);
    let gram = a.transpose() * a;
    let eig = nalgebra::SymmetricEigen::new(gram);
    Some(
        eig.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(0.0),
    )
}

/// Builds the operator named in a config. Random operators (masks,
/// projections) draw from `stream`.
pub fn make_operator<T: Real>(
    cfg: &OperatorConfig,
    dim: usize,
    stream: &mut RandomStream,
) -> Result<Arc<dyn ForwardOperator<T>>> {
    if dim == 0 {
        return Err(AcdcError::invalid(
            "operator input dimension must be positive",
        ));
    }
    Ok(match cfg {
        OperatorConfig::Identity => Arc::new(Identity::new(dim)),
        OperatorConfig::RandomMask { keep } => Arc::new(SubsampleMask::random(dim, *keep, stream)?),
        OperatorConfig::BoxMask { start, len } => {
            Arc::new(SubsampleMask::boxed(dim, *start, *len)?)
        }
        OperatorConfig::Convolution { kernel } => {
            let k = match kernel {
                KernelConfig::Gaussian { taps, std } => gaussian_kernel(*taps, std.map(lit))?,
                KernelConfig::Motion { taps, decay } => motion_kernel(*taps, decay.map(lit))?,
                KernelConfig::Inline(values) => values.iter().map(|&v| lit(v)).collect(),
            };
            Arc::new(CircularConvolution::new(dim, k)?)
        }
        OperatorConfig::Decimation { factor } => Arc::new(Decimation::new(dim, *factor)?),
        OperatorConfig::GaussianProjection { rows } => {
            Arc::new(DenseProjection::gaussian(*rows, dim, stream)?)
        }
        OperatorConfig::Hdr { scale } => Arc::new(HdrClip::new(dim, lit(*scale))?),
        OperatorConfig::PhaseRetrieval { oversampling } => {
            Arc::new(FourierMagnitude::new(dim, *oversampling)?)
        }
    })
}
