//! Shared fixtures for unit tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complex::GridSpec;
use crate::problem::MaterialField;

/// 4×4×4 unit cube without its central 2×2×2 block.
pub fn cavity_spec() -> GridSpec {
    GridSpec::unit_cube(4).with_cavity([1, 1, 1], [3, 3, 3])
}

/// 6×6×6 unit cube with two separated cavities.
pub fn two_cavity_spec() -> GridSpec {
    GridSpec::unit_cube(6)
        .with_cavity([1, 1, 1], [2, 2, 2])
        .with_cavity([3, 3, 3], [5, 5, 5])
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Per-cell ε in [0.5, 2] and μ a random permutation of (1, 2, 4).
pub fn random_materials(n_cells: usize, seed: u64) -> MaterialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MaterialField::identity(n_cells);
    for c in 0..n_cells {
        m.eps[c] = [0, 1, 2].map(|_| rng.gen_range(0.5..2.0));
        let mut mu = [1.0, 2.0, 4.0];
        mu.shuffle(&mut rng);
        m.mu[c] = mu;
    }
    m
}
