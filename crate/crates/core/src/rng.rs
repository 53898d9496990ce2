//! Seeded random streams.
//!
//! Every stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed by
//! `seed_from_u64(seed)`. ChaCha output is specified bit-for-bit, so a seed
//! reproduces the same draws on every platform. Sub-streams reuse the key
//! and select a distinct ChaCha stream id, which makes them independent of
//! how many values the parent has already produced.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream `id` derived from the seed alone.
    pub fn substream(&self, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        // stream 0 belongs to the parent
        inner.set_stream(id.wrapping_add(1));
        Self { seed: self.seed, inner }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Shorthand for [`SeededRng::new`].
pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::new(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(rng: &mut SeededRng, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(draws(&mut seeded_rng(0), 100), draws(&mut seeded_rng(0), 100));
    }

    #[test]
    fn different_seeds_differ() {
        assert_ne!(draws(&mut seeded_rng(0), 100), draws(&mut seeded_rng(1), 100));
    }

    #[test]
    fn substreams_ignore_parent_position() {
        let fresh = seeded_rng(42);
        let mut used = seeded_rng(42);
        draws(&mut used, 1000);
        let a = draws(&mut fresh.substream(3), 50);
        let b = draws(&mut used.substream(3), 50);
        assert_eq!(a, b);
        // interleaving draws from two sub-streams does not couple them
        let mut s1 = fresh.substream(1);
        let mut s2 = fresh.substream(2);
        let first_s2 = draws(&mut s2, 10);
        let first_s1 = draws(&mut s1, 10);
        assert_eq!(first_s1, draws(&mut fresh.substream(1), 10));
        assert_eq!(first_s2, draws(&mut fresh.substream(2), 10));
        assert_ne!(first_s1, first_s2);
        assert_ne!(draws(&mut fresh.substream(1), 10), draws(&mut seeded_rng(42), 10));
    }

    #[test]
    fn known_first_draw_is_pinned() {
        // Freezes the generator choice; a dependency bump that changes the
        // stream would silently invalidate every golden trace.
        let mut rng = seeded_rng(0);
        assert_eq!(rng.next_u64(), 13080132717333068652);
        assert_eq!(rng.normal(), -0.14406163542784764);
    }
}
