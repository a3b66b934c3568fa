//! Inputs shared by the benchmarks.

use hmix_core::ImageTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random `width x width x 3` image.
pub fn image(width: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * width * 3).map(|_| rng.random::<f64>()).collect();
    ImageTensor::new(width, width, 3, data).expect("dims match data")
}

/// Noisy points along a logistic boundary, as coefficient judgments would lie.
pub fn boundary_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = (i % 11) as f64 / 10.0;
            let y = 0.05 + 0.9 / (1.0 + (-12.0 * (x - 0.45)).exp()) + rng.random_range(-0.05..0.05);
            (x, y.clamp(0.0, 1.0))
        })
        .collect()
}
