//! Shared helpers for the criterion benches.

use clickchoice_core::solver::WeightedCellCounts;
use clickchoice_core::types::{CountTensor, GridSpec};

/// Deterministic pseudo-random integer weights, no RNG dependency.
pub fn synthetic_counts(grid: GridSpec, salt: u64) -> WeightedCellCounts {
    let cells = grid.cells();
    let mix = |c: usize, shift: u64| {
        ((c as u64 + salt).wrapping_mul(6364136223846793005 + shift) >> 33) % 40
    };
    let a: Vec<f64> = (0..cells).map(|c| mix(c, 1) as f64).collect();
    let b: Vec<f64> = (0..cells).map(|c| mix(c, 7) as f64 + 1.0).collect();
    WeightedCellCounts::new(grid, a, b).unwrap()
}

/// A small multi-category tensor with two latent groups baked in.
pub fn synthetic_tensor(grid: GridSpec, categories: usize) -> CountTensor {
    let names: Vec<String> = (0..categories).map(|k| format!("k{k:02}")).collect();
    let mut n = Vec::new();
    let mut q = Vec::new();
    for k in 0..categories {
        let lift = if k % 2 == 0 { 0.1 } else { 0.5 };
        let mut nk = vec![vec![0u64; grid.frequency_levels]; grid.recency_levels];
        let mut qk = vec![vec![0u64; grid.frequency_levels]; grid.recency_levels];
        for i in 0..grid.recency_levels {
            for j in 0..grid.frequency_levels {
                nk[i][j] = 50;
                let rate = lift
                    + 0.3 * (i as f64 / grid.recency_levels as f64)
                    + 0.1 * (j as f64 / grid.frequency_levels as f64);
                qk[i][j] = (50.0 * rate.min(0.95)) as u64;
            }
        }
        n.push(nk);
        q.push(qk);
    }
    CountTensor::new(grid, names, n, q).unwrap()
}
