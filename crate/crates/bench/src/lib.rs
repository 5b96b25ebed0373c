//! Fixtures shared by the benchmarks.

use mrk_core::{generate_synthetic, ClassSpec, GeneratorSpec, LinearSystem};

/// `classes` standard-normal classes of `rows` x `dim`, shuffled.
pub fn planted(classes: usize, rows: usize, dim: usize, seed: u64) -> LinearSystem {
    generate_synthetic(&GeneratorSpec {
        classes: vec![ClassSpec::standard(rows); classes],
        dimension: dim,
        solution_spread: 1.0,
        seed,
        shuffle: true,
    })
    .expect("valid benchmark spec")
}
