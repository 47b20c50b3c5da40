//! Deterministic randomness.
//!
//! Every stochastic choice in the crate draws from a [`SeedStream`] built from
//! a root seed and a purpose tag, so that individual pipeline stages (split,
//! weight init, dropout, augmentation, resampling, MC passes) can be held
//! fixed while others vary. Derived seeds chain: the output of [`derive`] is
//! itself a valid root for further derivation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived seed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Dropout = 3,
    Shuffle = 4,
    Augment = 5,
    Adasyn = 6,
    Oversample = 7,
    Rebalance = 8,
    McPass = 9,
    Sample = 10,
    Generator = 11,
    Noise = 12,
    Stage1 = 13,
    Stage2 = 14,
    TrainLoop = 15,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a root, a purpose tag, and an index.
pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(root ^ splitmix(stream as u64)) ^ index)
}

/// A seeded random stream. All draws are platform-stable: the generator is
/// ChaCha8 and every conversion to floats or bounded integers is done here.
#[derive(Debug, Clone)]
pub struct SeedStream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in 0..n. Panics if n == 0.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index bound must be positive");
        // Rejection sampling over the largest multiple of n below 2^64.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (caches the second value).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u1 = self.next_f64();
            if u1 <= f64::MIN_POSITIVE {
                continue;
            }
            let u2 = self.next_f64();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            self.spare_normal = Some(r * theta.sin());
            return r * theta.cos();
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}
