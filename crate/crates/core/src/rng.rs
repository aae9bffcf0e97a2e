//! Seeded randomness.
//!
//! Every random draw in the crate goes through a [`SeededRng`]: ChaCha8 keyed
//! by a 64-bit seed, with independent sub-streams selected by ChaCha's 64-bit
//! stream word. ChaCha is a counter-based generator with fixed published
//! constants, so a seed reproduces the same draws on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Scalar;

pub type SeededRng = ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for (`seed`, `stream`). Distinct streams never overlap.
pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> T {
    T::lit(rng.random_range(lo..hi))
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Fixed stream ids so that each pipeline stage draws from its own sequence.
pub mod streams {
    pub const INIT_FLOW: u64 = 1;
    pub const INIT_EMBEDDER: u64 = 2;
    pub const INIT_CONTRASTIVE: u64 = 3;
    pub const INIT_CLASSIFIER: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const PERTURB: u64 = 6;
    pub const GENERATE: u64 = 7;
    pub const MINING: u64 = 8;
    pub const SYNTH: u64 = 9;
}
