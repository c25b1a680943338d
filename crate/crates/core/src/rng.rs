//! Seeded, single-owner random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A deterministic random stream. Identical seeds and identical call
/// sequences yield bitwise-identical outputs.
///
/// Streams are never shared; independent children are derived with
/// [`RngStream::split`].
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    draws: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child `index` of a stream seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            draws: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit words consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Child stream that depends only on this stream's seed and `index`,
    /// not on how much of this stream has been consumed.
    pub fn split(&self, index: u64) -> RngStream {
        RngStream::new(derive_seed(self.seed, index))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    pub fn gaussian_vec(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.gaussian()).collect()
    }

    /// Uniform on the unit sphere in `R^d` (normalized Gaussian).
    pub fn unit_sphere(&mut self, d: usize) -> Vec<f64> {
        loop {
            let mut v = self.gaussian_vec(d);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                return v;
            }
        }
    }

    /// Uniform in the closed unit ball in `R^d`: sphere direction with
    /// radius `U^{1/d}`.
    pub fn unit_ball(&mut self, d: usize) -> Vec<f64> {
        let mut v = self.unit_sphere(d);
        let r = self.uniform().powf(1.0 / d as f64);
        v.iter_mut().for_each(|x| *x *= r);
        v
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.draws += dst.len().div_ceil(8) as u64;
        self.inner.fill_bytes(dst)
    }
}
