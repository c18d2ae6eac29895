//! Shared input builders for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ritc_core::eval::SegMask;
use ritc_core::{RasterImage, Tensor};

pub fn random_plane(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

pub fn random_image(h: usize, w: usize, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RasterImage::new(h, w, (0..3 * h * w).map(|_| rng.gen_range(0.0..=1.0)).collect())
}

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect())
}

pub fn random_mask(h: usize, w: usize, classes: u8, seed: u64) -> SegMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SegMask::new(h, w, (0..h * w).map(|_| rng.gen_range(0..=classes)).collect()).unwrap()
}
