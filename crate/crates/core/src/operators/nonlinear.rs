use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::ForwardOperator;
use crate::error::{AcdcError, Result};
use crate::scalar::{from_usize, lit, Real};
use crate::signal::Signal;

/// HDR-style saturation y = clip(c·x, 0, 1).
#[derive(Clone, Debug)]
pub struct HdrClip<T> {
    dim: usize,
    scale: T,
}

impl<T: Real> HdrClip<T> {
    pub fn new(dim: usize, scale: T) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(AcdcError::invalid("HDR scale must be positive"));
        }
        Ok(Self { dim, scale })
    }

    pub fn scale(&self) -> T {
        self.scale
    }
}

impl<T: Real> ForwardOperator<T> for HdrClip<T> {
    fn name(&self) -> &'static str {
        "hdr"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn is_linear(&self) -> bool {
        false
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        x.map(|v| (self.scale * v).max(T::zero()).min(T::one()))
    }
    /// Pass-through where the clip is inactive, zero where it saturates.
    fn vjp(&self, x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        x.zip_map(v, |xi, vi| {
            let t = self.scale * xi;
            if t > T::zero() && t < T::one() {
                self.scale * vi
            } else {
                T::zero()
            }
        })
    }
    fn back_project(&self, y: &Signal<T>) -> Signal<T> {
        y.scale(T::one() / self.scale)
    }
}

/// Oversampled Fourier magnitude y_k = |(F P x)_k| / √s, where P zero-pads
/// x to length s·d and F is the unnormalised DFT.
pub struct FourierMagnitude<T: Real> {
    dim: usize,
    oversampling: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for FourierMagnitude<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierMagnitude")
            .field("dim", &self.dim)
            .field("oversampling", &self.oversampling)
            .finish()
    }
}

/// Keeps the gradient finite at zero magnitude.
const MAGNITUDE_EPS: f64 = 1e-12;

impl<T: Real> FourierMagnitude<T> {
    pub fn new(dim: usize, oversampling: usize) -> Result<Self> {
        if oversampling == 0 {
            return Err(AcdcError::invalid("oversampling factor must be at least 1"));
        }
        let n = dim * oversampling;
        let mut planner = FftPlanner::new();
        Ok(Self {
            dim,
            oversampling,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    fn norm(&self) -> T {
        T::one() / from_usize::<T>(self.oversampling).sqrt()
    }

    fn spectrum(&self, x: &Signal<T>) -> Vec<Complex<T>> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.dim * self.oversampling];
        for (b, &v) in buf.iter_mut().zip(x.iter()) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }
}

impl<T: Real> ForwardOperator<T> for FourierMagnitude<T> {
    fn name(&self) -> &'static str {
        "phase_retrieval"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim * self.oversampling
    }
    fn is_linear(&self) -> bool {
        false
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        let c = self.norm();
        Signal::from_raw(self.spectrum(x).iter().map(|z| c * z.norm()).collect())
    }
    /// Re(Pᵀ Fᴴ (v ⊙ X / √(|X|² + ε))) / √s.
    fn vjp(&self, x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        let c = self.norm();
        let eps: T = lit(MAGNITUDE_EPS);
        let mut buf = self.spectrum(x);
        for (z, &vk) in buf.iter_mut().zip(v.iter()) {
            let mag = (z.norm_sqr() + eps).sqrt();
            *z *= c * vk / mag;
        }
        self.inverse.process(&mut buf);
        Signal::from_raw(buf[..self.dim].iter().map(|z| z.re).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    fn fd_vjp(op: &dyn ForwardOperator<f64>, x: &Signal<f64>, v: &Signal<f64>) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                let mut m = x.clone();
                p.as_mut_slice()[i] += h;
                m.as_mut_slice()[i] -= h;
                (op.apply(&p).dot(v) - op.apply(&m).dot(v)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn constant_signal_spectrum() {
        let d = 8;
        let c = 0.7;
        let op = FourierMagnitude::<f64>::new(d, 2).unwrap();
        let y = op.apply(&Signal::filled(d, c));
        assert_relative_eq!(y[0], c * d as f64 / 2f64.sqrt(), epsilon = 1e-12);
        // Zero padding makes the odd bins nonzero; only even bins vanish.
        for k in (2..2 * d).step_by(2) {
            assert!(y[k].abs() < 1e-12, "bin {k} = {}", y[k]);
        }
        assert!(y[1] > 0.1);
    }

    #[test]
    fn magnitude_vjp_matches_finite_differences() {
        let mut s = RandomStream::new(5);
        let op = FourierMagnitude::<f64>::new(16, 2).unwrap();
        for _ in 0..5 {
            let x: Signal<f64> = s.normal_signal(16);
            let v: Signal<f64> = s.normal_signal(32);
            let g = op.vjp(&x, &v);
            let fd = fd_vjp(&op, &x, &v);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn hdr_clip_and_gradient() {
        let op = HdrClip::<f64>::new(4, 2.0).unwrap();
        let x = Signal::new(vec![-0.2, 0.1, 0.3, 0.9]).unwrap();
        assert_eq!(op.apply(&x).as_slice(), &[0.0, 0.2, 0.6, 1.0]);
        let g = op.vjp(&x, &Signal::filled(4, 1.0));
        assert_eq!(g.as_slice(), &[0.0, 2.0, 2.0, 0.0]);
        let fd = fd_vjp(&op, &x, &Signal::filled(4, 1.0));
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hdr_is_lipschitz_with_constant_c() {
        let mut s = RandomStream::new(6);
        let op = HdrClip::<f64>::new(10, 2.0).unwrap();
        for _ in 0..200 {
            let a: Signal<f64> = s.normal_signal(10);
            let b: Signal<f64> = s.normal_signal(10);
            // clip is a projection, so ‖A a − A b‖ ≤ c‖a − b‖.
            assert!(op.apply(&a).dist(&op.apply(&b)) <= 2.0 * a.dist(&b) + 1e-12);
        }
    }
}
