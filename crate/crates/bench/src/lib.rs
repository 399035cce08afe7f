//! Fixtures shared by the benchmarks.

use scid::{build_cover, build_grid, random_weights, Cover, ScatteringFunction, WeightSequence};

/// A fully occupied diagonal cover on a `J × J` box with `n_t = n_g = n`.
pub fn fixture(j: usize, n: usize) -> (Cover, ScatteringFunction, WeightSequence) {
    let grid = build_grid(j, 1.0, n, n, j, j).expect("valid grid");
    let mask: Vec<Vec<bool>> = (0..j).map(|a| (0..j).map(|b| a == b).collect()).collect();
    let cover = build_cover(&grid, &mask).expect("valid cover");
    let sf = ScatteringFunction::random(&grid, &cover, 1);
    let w = random_weights(j, 2).expect("prime length");
    (cover, sf, w)
}
