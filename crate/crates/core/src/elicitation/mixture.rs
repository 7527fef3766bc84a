use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ElicitedPriorTable, GaussianComponent};
use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::seed;

/// One independent equal-weight Gaussian mixture per parameter dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DimensionMixture {
    means: Vec<f64>,
    sds: Vec<f64>,
    // log(1/K) - log(sd) - log(2 pi)/2, per component
    log_norm: Vec<f64>,
}

impl DimensionMixture {
    fn new(components: impl IntoIterator<Item = GaussianComponent>) -> Self {
        let (means, sds): (Vec<f64>, Vec<f64>) = components.into_iter().map(|c| (c.mean, c.std)).unzip();
        let log_k = (means.len() as f64).ln();
        let log_norm = sds.iter().map(|s| -log_k - s.ln() - 0.5 * LN_2PI).collect();
        DimensionMixture { means, sds, log_norm }
    }

    fn log_density_grad(&self, x: f64) -> (f64, f64) {
        if self.means.len() == 1 {
            let z = (x - self.means[0]) / self.sds[0];
            return (self.log_norm[0] - 0.5 * z * z, -z / self.sds[0]);
        }
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.means.len() {
            let z = (x - self.means[k]) / self.sds[k];
            max = max.max(self.log_norm[k] - 0.5 * z * z);
        }
        let (mut total, mut slope) = (0.0, 0.0);
        for k in 0..self.means.len() {
            let z = (x - self.means[k]) / self.sds[k];
            let w = (self.log_norm[k] - 0.5 * z * z - max).exp();
            total += w;
            slope -= w * z / self.sds[k];
        }
        (max + total.ln(), slope / total)
    }
}

/// Mixture prior over (weights.., bias). Component weights are the
/// Dirichlet(1) expectation, 1/K. The bias dimension is N(0, 1); K identical
/// standard-normal components collapse to that single Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    dims: Vec<DimensionMixture>,
    k: usize,
}

pub fn build_mixture(table: &ElicitedPriorTable) -> Result<MixturePrior> {
    table.validate()?;
    let d = table.d();
    let mut dims: Vec<DimensionMixture> = (0..d)
        .map(|j| DimensionMixture::new(table.components.iter().map(|row| row[j])))
        .collect();
    dims.push(DimensionMixture::new([GaussianComponent::STANDARD]));
    Ok(MixturePrior { dims, k: table.k() })
}

impl MixturePrior {
    /// Independent N(0, 1) on every weight and on the bias.
    pub fn standard_normal(d: usize) -> Self {
        let dims = (0..=d).map(|_| DimensionMixture::new([GaussianComponent::STANDARD])).collect();
        MixturePrior { dims, k: 1 }
    }

    /// Parameter dimension, bias included.
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Components of dimension `j` as (mean, sd) pairs.
    pub fn components(&self, j: usize) -> Vec<GaussianComponent> {
        let m = &self.dims[j];
        m.means.iter().zip(&m.sds).map(|(&mean, &std)| GaussianComponent { mean, std }).collect()
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::Argument(format!(
                "parameter vector has length {}, prior expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(self.log_density_grad(theta, None))
    }

    /// Log density; when `grad` is given its entries are overwritten with the
    /// gradient. Lengths must equal `dim()`.
    pub fn log_density_grad(&self, theta: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        let mut total = 0.0;
        for (j, (m, &x)) in self.dims.iter().zip(theta).enumerate() {
            let (v, g) = m.log_density_grad(x);
            total += v;
            if let Some(grad) = grad.as_deref_mut() {
                grad[j] = g;
            }
        }
        total
    }

    /// Log density of dimension `j` alone.
    pub fn dimension_log_density(&self, j: usize, x: f64) -> f64 {
        self.dims[j].log_density_grad(x).0
    }

    /// One draw, together with the component picked in each dimension.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
        self.dims
            .iter()
            .map(|m| {
                let k = rng.random_range(0..m.means.len());
                let z: f64 = rng.sample(StandardNormal);
                (m.means[k] + m.sds[k] * z, k)
            })
            .unzip()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| self.draw(&mut rng).0).collect()
    }
}

/// `n` independent prior draws, deterministic per seed.
pub fn sample_prior(prior: &MixturePrior, n: usize, seed: u64) -> Vec<Vec<f64>> {
    prior.sample(n, seed)
}
