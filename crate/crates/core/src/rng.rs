//! Seeded random streams.
//!
//! Every random decision in the crate is drawn from a [`Stream`], a ChaCha8
//! keystream addressed by `(seed, purpose, lane, index)`:
//!
//! * the 256-bit ChaCha key is derived from `seed`, `purpose` and `lane` with
//!   SplitMix64: starting from `state = seed`, each of `purpose` and `lane` is
//!   absorbed as `state = splitmix64(state) ^ word`, then four further
//!   SplitMix64 outputs are written little-endian as the key;
//! * `index` selects the ChaCha stream (the 64-bit nonce), so substreams for
//!   different images or samples never overlap.
//!
//! Values are taken from the keystream one `u64` at a time. The derived draws
//! ([`Stream::below`], [`Stream::unit`], [`Stream::gamma`], ...) use fixed,
//! documented algorithms rather than `rand` distributions so that schedules
//! and augmentation streams are stable across library versions and can be
//! re-implemented elsewhere. See the "Reproducible randomness" chapter of the
//! book for the full recipe.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Version tag of the stream recipe, recorded in run metadata.
pub const STREAM_VERSION: &str = "chacha8-splitmix64-v1";

/// What a stream is used for. The discriminant is part of the key derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    UniformSchedule = 1,
    ClassAwareSchedule = 2,
    RepeatRounding = 3,
    RepeatShuffle = 4,
    PoolSample = 5,
    Augment = 6,
    Fixture = 7,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, purpose: Purpose, lane: u64) -> [u8; 32] {
    let mut state = seed;
    for word in [purpose as u64, lane] {
        state = splitmix64(&mut state) ^ word;
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, purpose: Purpose, lane: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(derive_key(seed, purpose, lane));
        inner.set_stream(index);
        Stream { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-and-reject, unbiased).
    ///
    /// Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform index into a slice of length `len`.
    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    pub fn unit_open_low(&mut self) -> f64 {
        1.0 - self.unit()
    }

    /// True with probability `p` (`unit() < p`).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// In-place Fisher–Yates shuffle, walking from the last element down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Standard normal via the cosine branch of Box–Muller (two uniforms per call).
    pub fn normal(&mut self) -> f64 {
        let radius = (-2.0 * self.unit_open_low().ln()).sqrt();
        let angle = std::f64::consts::TAU * self.unit();
        radius * angle.cos()
    }

    /// Gamma(shape, 1) by Marsaglia–Tsang; shapes below one use the
    /// `Gamma(shape + 1) * U^(1/shape)` boost.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boosted = self.gamma(shape + 1.0);
            return boosted * self.unit_open_low().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.unit();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Beta(a, b) as `X / (X + Y)` with independent `X ~ Gamma(a)`, `Y ~ Gamma(b)`.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.gamma(a);
        let y = self.gamma(b);
        let sum = x + y;
        if sum > 0.0 {
            x / sum
        } else {
            // both draws underflowed, only possible for tiny shapes
            if self.bernoulli(a / (a + b)) {
                1.0
            } else {
                0.0
            }
        }
    }
}
