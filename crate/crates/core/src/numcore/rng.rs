use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dense::DenseMatrix;

/// Seeded random stream with named substreams.
///
/// A substream's seed depends only on the parent seed and the name, never on
/// how much of the parent stream has been consumed.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, name: &str) -> Rng {
        // FNV-1a over the name, then mixed with the parent seed.
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        Rng::new(splitmix64(self.seed ^ splitmix64(h)))
    }

    pub fn substream_indexed(&self, name: &str, index: u64) -> Rng {
        let base = self.substream(name);
        Rng::new(splitmix64(base.seed.wrapping_add(splitmix64(index))))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> DenseMatrix {
        let data = (0..rows * cols).map(|_| std * self.normal()).collect();
        DenseMatrix::from_vec(rows, cols, data).expect("length matches")
    }

    /// Glorot/Xavier uniform initialization for a `fan_in x fan_out` weight.
    pub fn glorot_uniform(&mut self, fan_in: usize, fan_out: usize) -> DenseMatrix {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.uniform_range(-limit, limit))
            .collect();
        DenseMatrix::from_vec(fan_in, fan_out, data).expect("length matches")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(42).normal_matrix(4, 3, 1.0);
        let b = Rng::new(42).normal_matrix(4, 3, 1.0);
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a, Rng::new(43).normal_matrix(4, 3, 1.0));
    }

    #[test]
    fn substreams_ignore_parent_consumption() {
        let fresh = Rng::new(5);
        let mut used = Rng::new(5);
        for _ in 0..17 {
            used.uniform();
        }
        let a = fresh.substream("init").uniform();
        let b = used.substream("init").uniform();
        assert_eq!(a, b);
        assert_ne!(a, fresh.substream("kmeans").uniform());
        assert_ne!(
            fresh.substream_indexed("slice", 0).uniform(),
            fresh.substream_indexed("slice", 1).uniform()
        );
    }
}
