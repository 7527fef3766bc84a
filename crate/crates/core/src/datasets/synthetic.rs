use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::seed;

/// True coefficients of the synthetic task `y = 2 x1 - x2 + x3 + noise`.
pub const SYNTHETIC_WEIGHTS: [f64; 3] = [2.0, -1.0, 1.0];

pub fn synthetic_target(x: &[f64]) -> f64 {
    SYNTHETIC_WEIGHTS.iter().zip(x).map(|(w, v)| w * v).sum()
}

/// Three standard-normal features with `y = 2 x1 - x2 + x3 + e`,
/// `e ~ N(0, noise_sd^2)`. `noise_sd` is a standard deviation.
pub fn generate_synthetic(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("synthetic dataset needs n >= 1".into()));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::Argument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, noise_sd).expect("validated noise sd");
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let eps = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        targets.push(synthetic_target(&x) + eps);
        rows.push(x);
    }
    let names = (0..3).map(|j| format!("feature {j}")).collect();
    Dataset::new(rows, targets, names, "target", TaskKind::Regression)
}
