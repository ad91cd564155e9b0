//! Counter-based seeded randomness.
//!
//! Every random draw in the library goes through [`SeededRng`]. A generator is
//! identified by `(seed, stream_id)`; streams with the same seed are independent
//! ChaCha keystreams, so trajectory `i` of an iteration draws the same numbers
//! whether trajectories are sampled serially or in parallel.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to mix seeds and indices into fresh seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a base seed with an index (iteration, grid point, ...) into a new seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child generator keyed on this generator's identity and current position.
    ///
    /// Does not advance `self`, so attaching an auxiliary stream (observation
    /// noise, say) leaves the parent's draw sequence untouched.
    pub fn derive(&self, sub_stream: u64) -> SeededRng {
        let pos = self.inner.get_word_pos();
        let key = derive_seed(
            derive_seed(self.seed, self.stream_id),
            (pos as u64) ^ ((pos >> 64) as u64).rotate_left(17),
        );
        SeededRng::new(key, sub_stream)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[low, high]`.
    pub fn uniform_in<T: Scalar>(&mut self, low: T, high: T) -> T {
        let u = T::lit(self.uniform());
        low + (high - low) * u
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        self.inner.random_range(0..n)
    }

    pub fn normal<T: Scalar>(&mut self) -> T {
        let z: f64 = self.inner.sample(StandardNormal);
        T::lit(z)
    }

    pub fn fill_normal<T: Scalar>(&mut self, out: &mut [T]) {
        for v in out {
            *v = self.normal();
        }
    }
}
