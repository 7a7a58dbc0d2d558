//! Deterministic random source shared by every stochastic operation.
//!
//! The generator is ChaCha with 8 rounds, seeded from a `u64` through
//! `SeedableRng::seed_from_u64`. ChaCha output is specified bit-for-bit, so a
//! seed reproduces the same stream on every platform. Independent streams for
//! the same seed are obtained with [`Rng::stream`], which selects a distinct
//! ChaCha stream id and therefore never overlaps the default stream.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream `id` of the generator seeded with `seed`. Stream 0 is `Rng::new(seed)`.
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Rng(inner)
    }

    /// Child generator seeded from the next output of `self`.
    pub fn fork(&mut self) -> Self {
        Rng::new(self.0.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform index in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    /// `true` with probability `p`, clamped to `[0, 1]`.
    pub fn chance(&mut self, p: f64) -> bool {
        // A draw is consumed even for p in {0, 1} so the stream position does
        // not depend on the rate.
        let u = self.uniform();
        u < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }

    /// `count` distinct values from `[0, n)`, in draw order.
    pub fn distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.0, n, count).into_vec()
    }
}
