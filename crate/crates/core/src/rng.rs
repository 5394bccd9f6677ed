//! Seeded random streams.
//!
//! Every stochastic decision in the crate (initialization, shuffling, dropout
//! masks, synthetic noise) draws from a [`RngState`]. The generator is ChaCha8
//! seeded through `SeedableRng::seed_from_u64`; independent substreams are
//! obtained by selecting a ChaCha stream id derived from a tag path with
//! SplitMix64. ChaCha output is specified bit-for-bit, so identical seeds and
//! call sequences reproduce across platforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Well-known substream tags.
pub mod tags {
    pub const INIT: u64 = 0x1;
    pub const SHUFFLE: u64 = 0x2;
    pub const DROPOUT: u64 = 0x3;
    pub const SPLIT: u64 = 0x4;
    pub const SUBSET: u64 = 0x5;
    pub const SYNTH: u64 = 0x6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator for the child stream `tag`; does not advance `self`.
    pub fn substream(&self, tag: u64) -> Self {
        Self::with_stream(self.seed, splitmix64(self.stream ^ splitmix64(tag)))
    }

    /// Nested substream, e.g. `path(&[DROPOUT, epoch, batch])`.
    pub fn path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(self.clone(), |acc, &t| acc.substream(t))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_f32(&mut self) -> f32 {
        self.inner.random::<f32>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
