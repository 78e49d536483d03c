//! Counter-based, splittable random streams.
//!
//! Every consumer of randomness (AC noise, DC noise, operator construction,
//! measurement noise, ground-truth sampling) draws from its own substream so
//! that changing one stage never perturbs the draws of another. This is what
//! makes common-random-number comparisons (e.g. `J = 0` against `J = 10`)
//! meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{lit, Real};
use crate::signal::Signal;

/// Well-known substream labels.
pub mod labels {
    pub const TRUTH: u64 = 1;
    pub const OPERATOR: u64 = 2;
    pub const MEASUREMENT: u64 = 3;
    pub const AC_NOISE: u64 = 4;
    pub const DC_NOISE: u64 = 5;
    pub const BASELINE_NOISE: u64 = 6;
    pub const DIAGNOSTICS: u64 = 7;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 keyed by `seed`, with the 64-bit ChaCha stream id selecting the
/// substream. `position` is the ChaCha word counter, so `(seed, stream,
/// position)` pins the next draw exactly.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Independent child stream. Deterministic in `(seed, stream, label)` and
    /// independent of how many draws the parent has made.
    pub fn substream(&self, label: u64) -> Self {
        let id = splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self::with_stream(self.seed, id)
    }

    /// Child stream keyed by a draw from this one, for per-call independent
    /// noise inside Monte-Carlo loops.
    pub fn fork(&mut self) -> Self {
        let id = splitmix64(self.rng.random::<u64>());
        Self::with_stream(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn seek(&mut self, position: u128) {
        self.rng.set_word_pos(position);
    }

    pub fn standard_normal_f64(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn standard_normal<T: Real>(&mut self) -> T {
        lit(self.standard_normal_f64())
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal_signal<T: Real>(&mut self, d: usize) -> Signal<T> {
        Signal::from_fn(d, |_| self.standard_normal())
    }
}

/// Source of standard-normal draws. Implemented by [`RandomStream`] and by
/// [`ZeroNoise`], which replaces every draw with zero for deterministic tests.
pub trait GaussianSource {
    fn next_standard_normal(&mut self) -> f64;

    fn is_silent(&self) -> bool {
        false
    }
}

impl GaussianSource for RandomStream {
    fn next_standard_normal(&mut self) -> f64 {
        self.standard_normal_f64()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl GaussianSource for ZeroNoise {
    fn next_standard_normal(&mut self) -> f64 {
        0.0
    }

    fn is_silent(&self) -> bool {
        true
    }
}

pub(crate) fn draw_signal<T: Real, N: GaussianSource + ?Sized>(
    noise: &mut N,
    d: usize,
) -> Signal<T> {
    Signal::from_fn(d, |_| lit(noise.next_standard_normal()))
}
