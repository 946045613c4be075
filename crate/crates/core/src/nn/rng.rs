use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Scalar;

/// Seedable counter-based generator; equal states yield equal draw sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn seed(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent child stream, e.g. one per network.
    pub fn fork(&mut self) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(self.0.gen()))
    }

    pub fn normal<F: Scalar>(&mut self, std: F) -> F {
        let z: f64 = StandardNormal.sample(&mut self.0);
        std * F::of(z)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.gen()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.0);
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}
