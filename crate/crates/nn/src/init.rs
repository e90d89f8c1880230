//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::Tensor;

pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    if std == 0.0 {
        return Tensor::zeros(rows, cols);
    }
    let dist = Normal::new(0.0, std).expect("finite positive std");
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

/// Normal with variance `1 / fan_in`, for a `fan_in × fan_out` weight.
pub fn lecun_normal(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    normal(fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng)
}
