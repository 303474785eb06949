//! Shared fixtures for the benchmarks.

use hedonic_core::rng::stream_rng;
use hedonic_core::synth::{even_sizes, generate_planted};
use hedonic_core::{AffinityMatrix, Partition};
use nalgebra::DMatrix;
use rand::Rng;

/// Planted game with `blocks` equal blocks and a 4σ gap.
pub fn planted_game(n: usize, blocks: usize, seed: u64) -> (AffinityMatrix, Partition) {
    let sizes = even_sizes(n, blocks).expect("n divisible into blocks");
    generate_planted(n, &sizes, 1.0, 0.0, 0.25, seed).expect("valid planted game")
}

/// Uniform `[0, 1)` matrix.
pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 0);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}
