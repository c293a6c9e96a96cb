//! Seeded, splittable random streams.
//!
//! A [`RandomSource`] is a ChaCha8 generator keyed by the master seed (expanded
//! with SplitMix64, as `SeedableRng::seed_from_u64` does) and positioned on the
//! 64-bit stream `stream_index`. Compound indices such as (experiment phase,
//! sample) are folded into one stream index with [`stream_id`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RandomSource {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of indices into a single stream index.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3, |h, &p| mix64(h ^ mix64(p)))
}

impl RandomSource {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        RandomSource { master_seed, stream_index, rng }
    }

    /// Stream for a compound index, e.g. `&[phase, sample]`.
    pub fn derived(master_seed: u64, parts: &[u64]) -> Self {
        Self::new(master_seed, stream_id(parts))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform direction index in `0..4`.
    #[inline]
    pub fn direction(&mut self) -> usize {
        (self.rng.next_u32() & 3) as usize
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Geometric on `{1, 2, ...}` with success probability `p`.
    pub fn geometric(&mut self, p: f64) -> u64 {
        if p >= 1.0 {
            return 1;
        }
        let u = 1.0 - self.uniform();
        1 + (u.ln() / (1.0 - p).ln()).floor() as u64
    }
}

impl RngCore for RandomSource {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RandomSource::new(7, 3);
        let mut b = RandomSource::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RandomSource::new(7, 3);
        let mut b = RandomSource::new(7, 4);
        let va: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(va, vb);
        assert_ne!(stream_id(&[1, 2]), stream_id(&[2, 1]));
    }

    #[test]
    fn geometric_mean() {
        let mut r = RandomSource::new(1, 0);
        let n = 200_000;
        let p = 0.2;
        let mean = (0..n).map(|_| r.geometric(p) as f64).sum::<f64>() / n as f64;
        assert!((mean - 1.0 / p).abs() < 0.05, "{mean}");
    }

    #[test]
    fn uniform_range() {
        let mut r = RandomSource::new(9, 9);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
