use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bayes::Prior;
use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::sampler::LogDensity;

pub const DEFAULT_BANDWIDTH_FACTOR: f64 = 0.25;
const JITTER: f64 = 1e-8;

/// Gaussian kernel density estimate with kernel covariance
/// `factor^2 * sample covariance` (unbiased covariance).
#[derive(Debug, Clone)]
pub struct Kde {
    dim: usize,
    points: Vec<f64>,
    // points mapped through the inverse Cholesky factor of the kernel covariance
    whitened: Vec<f64>,
    chol: DMatrix<f64>,
    chol_inv: DMatrix<f64>,
    log_norm: f64,
}

impl Kde {
    pub fn fit(samples: &[Vec<f64>], bandwidth_factor: f64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Argument("a KDE needs at least two samples".into()));
        }
        let dim = samples[0].len();
        if dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Argument("KDE samples must share a positive dimension".into()));
        }
        if !(bandwidth_factor > 0.0) {
            return Err(Error::Argument(format!("bandwidth factor {bandwidth_factor} must be positive")));
        }
        let mean: Vec<f64> = (0..dim).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for s in samples {
            for a in 0..dim {
                for b in 0..dim {
                    cov[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
        let kernel = cov * (bandwidth_factor * bandwidth_factor / (n - 1) as f64);
        let chol = match kernel.clone().cholesky() {
            Some(c) => c,
            None => {
                warn!("singular KDE covariance; adding diagonal jitter {JITTER}");
                let jittered = kernel + DMatrix::<f64>::identity(dim, dim) * JITTER;
                jittered.cholesky().ok_or_else(|| {
                    Error::Argument("KDE covariance is not positive definite even after jitter".into())
                })?
            }
        };
        let l = chol.l();
        let chol_inv = l.clone().try_inverse().ok_or_else(|| Error::Argument("singular KDE factor".into()))?;
        let log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let points: Vec<f64> = samples.concat();
        let mut whitened = Vec::with_capacity(points.len());
        for s in samples {
            whitened.extend((&chol_inv * DVector::from_column_slice(s)).iter());
        }
        Ok(Kde {
            dim,
            points,
            whitened,
            chol: l,
            chol_inv,
            log_norm: -(n as f64).ln() - 0.5 * dim as f64 * LN_2PI - log_det,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Kernel covariance matrix.
    pub fn kernel_covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        (&self.chol_inv * DVector::from_column_slice(x)).iter().copied().collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        self.eval(x, &mut g)
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let z = self.whiten(x);
        let n = self.len();
        let mut exps = Vec::with_capacity(n);
        let mut max = f64::NEG_INFINITY;
        for zi in self.whitened.chunks_exact(self.dim) {
            let d2: f64 = z.iter().zip(zi).map(|(a, b)| (a - b) * (a - b)).sum();
            let e = -0.5 * d2;
            max = max.max(e);
            exps.push(e);
        }
        let mut total = 0.0;
        // whitened-space gradient: -sum_i w_i (z - z_i)
        let mut gz = vec![0.0; self.dim];
        for (e, zi) in exps.iter().zip(self.whitened.chunks_exact(self.dim)) {
            let w = (e - max).exp();
            total += w;
            for k in 0..self.dim {
                gz[k] -= w * (z[k] - zi[k]);
            }
        }
        gz.iter_mut().for_each(|g| *g /= total);
        // chain rule through z = L^{-1} x
        for a in 0..self.dim {
            grad[a] = (0..self.dim).map(|k| self.chol_inv[(k, a)] * gz[k]).sum();
        }
        self.log_norm + max + total.ln()
    }
}

impl LogDensity for Kde {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, grad)
    }
}

impl Prior for Kde {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let i = rng.random_range(0..self.len());
        let eps = DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal));
        let shift = &self.chol * eps;
        self.points[i * self.dim..(i + 1) * self.dim]
            .iter()
            .zip(shift.iter())
            .map(|(p, s)| p + s)
            .collect()
    }
}
