//! Seeded randomness. Every generator in the crate is derived from a 64-bit
//! seed through ChaCha8 so runs are reproducible across platforms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

/// Weyl increment of SplitMix64.
pub const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the `ordinal`-th derived stream: `master + ordinal · γ (mod 2^64)`.
///
/// Ordinal 0 reproduces the master seed, and a stream's seed depends only on
/// its own ordinal, so appending streams never perturbs earlier ones.
/// ChaCha's `seed_from_u64` whitens the result.
pub fn derive_seed(master: u64, ordinal: u64) -> u64 {
    master.wrapping_add(ordinal.wrapping_mul(SEED_GAMMA))
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Entries drawn row-major so the stream order does not depend on the
/// storage layout.
pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn rademacher(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}
