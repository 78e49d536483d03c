//! Dense real vectors used for every iterate (x, z, u, y and intermediates).

use std::ops::{Add, Deref, Index, Sub};

use crate::error::{AcdcError, Result};
use crate::scalar::Real;

/// A finite, non-empty real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal<T> {
    values: Vec<T>,
}

impl<T: Real> Signal<T> {
    /// Validating constructor: rejects empty input and NaN/Inf entries.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(AcdcError::EmptySignal);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AcdcError::NonFinite("signal"));
        }
        Ok(Self { values })
    }

    /// Wraps values without validation. Callers that can produce non-finite
    /// entries must check [`Signal::is_finite`] before handing the result out.
    pub(crate) fn from_raw(values: Vec<T>) -> Self {
        debug_assert!(!values.is_empty());
        Self { values }
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| crate::scalar::lit(v)).collect())
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d > 0, "signal dimension must be positive");
        Self {
            values: vec![T::zero(); d],
        }
    }

    pub fn filled(d: usize, v: T) -> Self {
        assert!(d > 0, "signal dimension must be positive");
        Self { values: vec![v; d] }
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut s = Self::zeros(d);
        s.values[i] = T::one();
        s
    }

    pub fn from_fn(d: usize, f: impl FnMut(usize) -> T) -> Self {
        Self::from_raw((0..d).map(f).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| crate::scalar::to_f64(v))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Returns `self` if finite, otherwise a non-finite error naming `ctx`.
    pub(crate) fn checked(self, ctx: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(AcdcError::NonFinite(ctx))
        }
    }

    pub fn ensure_len(&self, d: usize) -> Result<()> {
        if self.len() == d {
            Ok(())
        } else {
            Err(AcdcError::DimensionMismatch {
                expected: d,
                found: self.len(),
            })
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dist(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / crate::scalar::from_usize(self.len())
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|v| v * a)
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self::from_raw(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self::from_raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) {
        debug_assert_eq!(self.len(), x.len());
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.values.iter()
    }
}

impl<T> Deref for Signal<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.values
    }
}

impl<T> Index<usize> for Signal<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T: Real> Add for &Signal<T> {
    type Output = Signal<T>;
    fn add(self, rhs: &Signal<T>) -> Signal<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &Signal<T> {
    type Output = Signal<T>;
    fn sub(self, rhs: &Signal<T>) -> Signal<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}
