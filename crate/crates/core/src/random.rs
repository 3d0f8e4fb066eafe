//! Seeded uniform test data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_SEED: u64 = 42;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tensor with elements drawn uniformly from `[-1, 1]`.
pub fn uniform(rng: &mut impl Rng, shape: &[usize]) -> Result<Tensor> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Tensor::from_vec(shape, data)
}
