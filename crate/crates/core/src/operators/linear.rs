use super::ForwardOperator;
use crate::error::{AcdcError, Result};
use crate::rng::RandomStream;
use crate::scalar::{from_usize, lit, Real};
use crate::signal::Signal;

#[derive(Clone, Debug)]
pub struct Identity<T> {
    dim: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T> Identity<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Real> ForwardOperator<T> for Identity<T> {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        x.clone()
    }
    fn vjp(&self, _x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        v.clone()
    }
}

/// Keeps a subset of entries (inpainting). The output lists the kept
/// entries in index order, so n = number kept.
#[derive(Clone, Debug)]
pub struct SubsampleMask<T> {
    dim: usize,
    kept: Vec<usize>,
    kind: &'static str,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> SubsampleMask<T> {
    pub fn from_kept(dim: usize, kept: Vec<usize>) -> Result<Self> {
        if kept.is_empty() || kept.iter().any(|&i| i >= dim) {
            return Err(AcdcError::invalid(
                "mask must keep at least one in-range entry",
            ));
        }
        Ok(Self {
            dim,
            kept,
            kind: "mask",
            _marker: std::marker::PhantomData,
        })
    }

    /// Keeps each entry independently with probability `keep`. A draw that
    /// keeps nothing is repeated.
    pub fn random(dim: usize, keep: f64, stream: &mut RandomStream) -> Result<Self> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(AcdcError::invalid(format!(
                "mask keep fraction must lie in (0, 1], got {keep}"
            )));
        }
        loop {
            let kept: Vec<usize> = (0..dim).filter(|_| stream.uniform() < keep).collect();
            if !kept.is_empty() {
                let mut m = Self::from_kept(dim, kept)?;
                m.kind = "random_mask";
                return Ok(m);
            }
        }
    }

    /// Drops the contiguous block `start..start + len`.
    pub fn boxed(dim: usize, start: usize, len: usize) -> Result<Self> {
        if len == 0 || len >= dim || start + len > dim {
            return Err(AcdcError::invalid(format!(
                "box mask {start}..{} does not fit a signal of length {dim}",
                start + len
            )));
        }
        let kept = (0..dim)
            .filter(|i| *i < start || *i >= start + len)
            .collect();
        let mut m = Self::from_kept(dim, kept)?;
        m.kind = "box_mask";
        Ok(m)
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }
}

impl<T: Real> ForwardOperator<T> for SubsampleMask<T> {
    fn name(&self) -> &'static str {
        self.kind
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.kept.len()
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        Signal::from_raw(self.kept.iter().map(|&i| x[i]).collect())
    }
    fn vjp(&self, _x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        let mut out = vec![T::zero(); self.dim];
        for (&i, &val) in self.kept.iter().zip(v.iter()) {
            out[i] = val;
        }
        Signal::from_raw(out)
    }
}

/// Circular convolution (k ⊛ x)_i = Σ_j k_j x_{(i − j + c) mod d}, with the
/// kernel centred at index c = len/2. Periodic boundaries keep the operator
/// exactly circulant.
#[derive(Clone, Debug)]
pub struct CircularConvolution<T> {
    dim: usize,
    kernel: Vec<T>,
}

impl<T: Real> CircularConvolution<T> {
    pub fn new(dim: usize, kernel: Vec<T>) -> Result<Self> {
        if kernel.is_empty() || kernel.iter().any(|k| !k.is_finite()) {
            return Err(AcdcError::invalid(
                "convolution kernel must be non-empty and finite",
            ));
        }
        Ok(Self { dim, kernel })
    }

    pub fn kernel(&self) -> &[T] {
        &self.kernel
    }

    fn convolve(&self, x: &[T]) -> Vec<T> {
        let d = self.dim;
        let c = self.kernel.len() / 2;
        (0..d)
            .map(|i| {
                self.kernel
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| k * x[(i + c + d * self.kernel.len() - j) % d])
                    .sum()
            })
            .collect()
    }

    fn correlate(&self, y: &[T]) -> Vec<T> {
        let d = self.dim;
        let c = self.kernel.len() / 2;
        (0..d)
            .map(|m| {
                self.kernel
                    .iter()
                    .enumerate()
                    .map(|(j, &k)| k * y[(m + j + d * self.kernel.len() - c) % d])
                    .sum()
            })
            .collect()
    }
}

impl<T: Real> ForwardOperator<T> for CircularConvolution<T> {
    fn name(&self) -> &'static str {
        "convolution"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        Signal::from_raw(self.convolve(x))
    }
    fn vjp(&self, _x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        Signal::from_raw(self.correlate(v))
    }
}

/// Anti-alias filter followed by keeping every `factor`-th sample.
#[derive(Clone, Debug)]
pub struct Decimation<T> {
    filter: CircularConvolution<T>,
    factor: usize,
}

impl<T: Real> Decimation<T> {
    pub fn new(dim: usize, factor: usize) -> Result<Self> {
        if factor == 0 || !dim.is_multiple_of(factor) {
            return Err(AcdcError::invalid(format!(
                "decimation factor {factor} must divide the signal length {dim}"
            )));
        }
        Ok(Self {
            filter: CircularConvolution::new(dim, cubic_kernel(factor))?,
            factor,
        })
    }
}

impl<T: Real> ForwardOperator<T> for Decimation<T> {
    fn name(&self) -> &'static str {
        "decimation"
    }
    fn input_dim(&self) -> usize {
        self.filter.dim
    }
    fn output_dim(&self) -> usize {
        self.filter.dim / self.factor
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        let full = self.filter.convolve(x);
        Signal::from_raw(full.into_iter().step_by(self.factor).collect())
    }
    fn vjp(&self, _x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        let mut up = vec![T::zero(); self.filter.dim];
        for (i, &val) in v.iter().enumerate() {
            up[i * self.factor] = val;
        }
        Signal::from_raw(self.filter.correlate(&up))
    }
}

/// Dense row-major `rows × dim` matrix.
#[derive(Clone, Debug)]
pub struct DenseProjection<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseProjection<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(AcdcError::invalid("projection matrix shape mismatch"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Entries i.i.d. N(0, 1/rows).
    pub fn gaussian(rows: usize, cols: usize, stream: &mut RandomStream) -> Result<Self> {
        if rows == 0 {
            return Err(AcdcError::invalid("projection needs at least one row"));
        }
        let scale = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| lit(scale * stream.standard_normal_f64()))
            .collect();
        Self::new(rows, cols, data)
    }
}

impl<T: Real> ForwardOperator<T> for DenseProjection<T> {
    fn name(&self) -> &'static str {
        "gaussian_projection"
    }
    fn input_dim(&self) -> usize {
        self.cols
    }
    fn output_dim(&self) -> usize {
        self.rows
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn apply(&self, x: &Signal<T>) -> Signal<T> {
        Signal::from_raw(
            self.data
                .chunks(self.cols)
                .map(|row| row.iter().zip(x.iter()).map(|(&a, &b)| a * b).sum())
                .collect(),
        )
    }
    fn vjp(&self, _x: &Signal<T>, v: &Signal<T>) -> Signal<T> {
        let mut out = vec![T::zero(); self.cols];
        for (row, &vi) in self.data.chunks(self.cols).zip(v.iter()) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        Signal::from_raw(out)
    }
}

fn normalize<T: Real>(mut k: Vec<T>) -> Vec<T> {
    let total: T = k.iter().copied().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Sampled, normalised Gaussian. Without an explicit std the 61-tap/σ=3
/// shape is kept by scaling σ with the tap count.
pub fn gaussian_kernel<T: Real>(taps: usize, std: Option<T>) -> Result<Vec<T>> {
    if taps == 0 || taps.is_multiple_of(2) {
        return Err(AcdcError::invalid("gaussian kernel needs an odd tap count"));
    }
    let std = std.unwrap_or_else(|| from_usize::<T>(taps) * lit(3.0 / 61.0));
    if !(std > T::zero()) {
        return Err(AcdcError::invalid("gaussian kernel std must be positive"));
    }
    let c = from_usize::<T>(taps / 2);
    Ok(normalize(
        (0..taps)
            .map(|j| {
                let t = from_usize::<T>(j) - c;
                (-(t * t) / (lit::<T>(2.0) * std * std)).exp()
            })
            .collect(),
    ))
}

/// Motion-like smear: one-sided exponential decay over `taps` samples
/// (default decay length taps/3), zero-padded on the left so the centre tap
/// is the leading edge.
pub fn motion_kernel<T: Real>(taps: usize, decay: Option<T>) -> Result<Vec<T>> {
    if taps == 0 {
        return Err(AcdcError::invalid("motion kernel needs at least one tap"));
    }
    let decay = decay.unwrap_or_else(|| from_usize::<T>(taps) / lit(3.0));
    if !(decay > T::zero()) {
        return Err(AcdcError::invalid("motion kernel decay must be positive"));
    }
    let mut k = vec![T::zero(); taps - 1];
    k.extend((0..taps).map(|j| (-from_usize::<T>(j) / decay).exp()));
    Ok(normalize(k))
}

/// Keys cubic (a = −0.5) stretched by `factor`, 4·factor + 1 taps.
pub fn cubic_kernel<T: Real>(factor: usize) -> Vec<T> {
    let a = -0.5f64;
    let w = |t: f64| {
        let t = t.abs();
        if t <= 1.0 {
            (a + 2.0) * t.powi(3) - (a + 3.0) * t * t + 1.0
        } else if t < 2.0 {
            a * t.powi(3) - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
        } else {
            0.0
        }
    };
    let f = factor as f64;
    let half = 2 * factor;
    normalize(
        (0..=2 * half)
            .map(|j| lit(w((j as f64 - half as f64) / f)))
            .collect(),
    )
}
