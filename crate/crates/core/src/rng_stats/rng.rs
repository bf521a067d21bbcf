use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Deterministic 64-bit generator (xoshiro256++) with ziggurat normals.
///
/// [`SeededRng::split`] hands out a child stream and jumps the parent 2^128
/// draws ahead, so split streams never overlap in practice.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream. The parent advances by 2^128 draws.
    pub fn split(&mut self) -> SeededRng {
        let child = SeededRng {
            seed: self.seed,
            inner: self.inner.clone(),
        };
        self.inner.jump();
        child
    }

    /// `n` independent streams derived from one seed.
    pub fn streams(seed: u64, n: usize) -> Vec<SeededRng> {
        let mut root = SeededRng::new(seed);
        (0..n).map(|_| root.split()).collect()
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal variate.
    #[inline]
    pub fn gauss(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_gauss(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gauss();
        }
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.gauss().to_bits(), b.gauss().to_bits());
        }
    }

    #[test]
    fn gauss_moments() {
        let mut rng = SeededRng::new(42);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.gauss();
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() <= 0.005, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.01, "var {var}");
    }

    #[test]
    fn split_streams_differ() {
        let mut streams = SeededRng::streams(3, 4);
        let firsts: Vec<u64> = streams.iter_mut().map(|s| s.next_u64()).collect();
        for i in 0..firsts.len() {
            for j in i + 1..firsts.len() {
                assert_ne!(firsts[i], firsts[j]);
            }
        }
    }

    #[test]
    fn uniform_bounds() {
        let mut rng = SeededRng::new(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.below(3) < 3);
        }
    }
}
