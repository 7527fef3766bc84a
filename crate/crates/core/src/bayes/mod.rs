//! Bayesian linear and logistic regression under an arbitrary differentiable
//! prior over (weights, bias).

mod samples;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, TaskKind};
use crate::elicitation::MixturePrior;
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus, LN_2PI};
use crate::sampler::{self, LogDensity, SamplerConfig};
use crate::seed;

pub use samples::PosteriorSampleSet;

/// A prior over (weights.., bias) that can also be sampled.
pub trait Prior: LogDensity {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

impl LogDensity for MixturePrior {
    fn dim(&self) -> usize {
        MixturePrior::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        MixturePrior::log_density_grad(self, x, Some(grad))
    }
}

impl Prior for MixturePrior {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        MixturePrior::draw(self, rng).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Half-Cauchy prior on the noise sd, sampled as log sd.
    HalfCauchy { scale: f64 },
    /// Fixed noise sd; no noise coordinate is sampled.
    Known { sd: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::HalfCauchy { scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelSpec<P> {
    pub task_kind: TaskKind,
    pub d: usize,
    pub prior: P,
    pub noise: NoiseModel,
}

impl<P: Prior> LinearModelSpec<P> {
    pub fn new(task_kind: TaskKind, prior: P) -> Result<Self> {
        let d = prior.dim().checked_sub(1).filter(|&d| d >= 1).ok_or_else(|| {
            Error::Argument("prior must cover at least one weight and the bias".into())
        })?;
        Ok(LinearModelSpec { task_kind, d, prior, noise: NoiseModel::default() })
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        let ok = match noise {
            NoiseModel::HalfCauchy { scale } => scale > 0.0 && scale.is_finite(),
            NoiseModel::Known { sd } => sd > 0.0 && sd.is_finite(),
        };
        if !ok {
            return Err(Error::Argument(format!("invalid noise model {noise:?}")));
        }
        self.noise = noise;
        Ok(self)
    }

    fn samples_log_noise(&self) -> bool {
        self.task_kind == TaskKind::Regression && matches!(self.noise, NoiseModel::HalfCauchy { .. })
    }

    /// Length of the sampled vector: weights, bias, and log noise sd when
    /// it is unknown.
    pub fn param_dim(&self) -> usize {
        self.d + 1 + self.samples_log_noise() as usize
    }
}

/// Design rows and targets; may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Observations {
    pub fn new(rows: &[Vec<f64>], y: Vec<f64>, d: usize) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Argument(format!("{} rows but {} targets", rows.len(), y.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Argument(format!("row of length {} where {d} expected", r.len())));
        }
        Ok(Observations { d, x: rows.concat(), y })
    }

    pub fn empty(d: usize) -> Self {
        Observations { d, x: Vec::new(), y: Vec::new() }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Observations { d: ds.d(), x: ds.rows().flatten().copied().collect(), y: ds.targets().to_vec() }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }
}

fn linear_predictor(w: &[f64], bias: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// Log-likelihood of one observation under the GLM.
pub fn observation_loglik(task_kind: TaskKind, eta: f64, y: f64, noise_sd: f64) -> f64 {
    match task_kind {
        TaskKind::Classification => y * eta - softplus(eta),
        TaskKind::Regression => {
            let r = (y - eta) / noise_sd;
            -0.5 * LN_2PI - noise_sd.ln() - 0.5 * r * r
        }
    }
}

/// Unnormalised posterior density over the sampled vector.
pub struct Posterior<'a, P> {
    pub spec: &'a LinearModelSpec<P>,
    pub data: &'a Observations,
}

impl<P: Prior> LogDensity for Posterior<'_, P> {
    fn dim(&self) -> usize {
        self.spec.param_dim()
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.spec.d;
        let k = d + 1;
        let mut value = self.spec.prior.log_density_grad(&theta[..k], &mut grad[..k]);
        let (w, bias) = (&theta[..d], theta[d]);
        match self.spec.task_kind {
            TaskKind::Classification => {
                for i in 0..self.data.len() {
                    let x = self.data.row(i);
                    let y = self.data.y[i];
                    let eta = linear_predictor(w, bias, x);
                    value += y * eta - softplus(eta);
                    let r = y - sigmoid(eta);
                    for j in 0..d {
                        grad[j] += r * x[j];
                    }
                    grad[d] += r;
                }
            }
            TaskKind::Regression => {
                let (sigma, log_noise) = match self.spec.noise {
                    NoiseModel::Known { sd } => (sd, None),
                    NoiseModel::HalfCauchy { scale } => {
                        let s = theta[k];
                        let sigma = s.exp();
                        // half-Cauchy density of sigma plus the log-Jacobian s
                        let ratio = sigma / scale;
                        value += std::f64::consts::LN_2 - std::f64::consts::PI.ln() - scale.ln()
                            - (ratio * ratio).ln_1p()
                            + s;
                        grad[k] = 1.0 - 2.0 * ratio * ratio / (1.0 + ratio * ratio);
                        (sigma, Some(k))
                    }
                };
                let inv_var = 1.0 / (sigma * sigma);
                let mut ss = 0.0;
                for i in 0..self.data.len() {
                    let x = self.data.row(i);
                    let r = self.data.y[i] - linear_predictor(w, bias, x);
                    ss += r * r;
                    for j in 0..d {
                        grad[j] += r * inv_var * x[j];
                    }
                    grad[d] += r * inv_var;
                }
                let n = self.data.len() as f64;
                value += -0.5 * n * LN_2PI - n * sigma.ln() - 0.5 * ss * inv_var;
                if let Some(k) = log_noise {
                    grad[k] += -n + ss * inv_var;
                }
            }
        }
        value
    }
}

/// Log posterior (up to a constant) and its gradient at `theta`.
pub fn log_posterior<P: Prior>(
    spec: &LinearModelSpec<P>,
    theta: &[f64],
    data: &Observations,
) -> Result<(f64, Vec<f64>)> {
    if theta.len() != spec.param_dim() {
        return Err(Error::Argument(format!(
            "parameter vector has length {}, expected {}",
            theta.len(),
            spec.param_dim()
        )));
    }
    if data.d() != spec.d {
        return Err(Error::Argument(format!("data has {} features, model has {}", data.d(), spec.d)));
    }
    let target = Posterior { spec, data };
    let mut grad = vec![0.0; theta.len()];
    let value = target.log_density_grad(theta, &mut grad);
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric { coordinate: j, message: format!("gradient is {}", grad[j]) });
    }
    if !value.is_finite() {
        let j = theta
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map_or(0, |(j, _)| j);
        return Err(Error::Numeric { coordinate: j, message: format!("log density is {value}") });
    }
    Ok((value, grad))
}

/// Posterior draws for `spec` given `data`.
pub fn sample_posterior<P: Prior>(
    spec: &LinearModelSpec<P>,
    data: &Observations,
    config: &SamplerConfig,
    seed: u64,
    feature_names: &[String],
) -> Result<PosteriorSampleSet> {
    if data.d() != spec.d || feature_names.len() != spec.d {
        return Err(Error::Argument("data, feature names and model disagree on dimension".into()));
    }
    let target = Posterior { spec, data };
    let draws = sampler::sample(&target, config, seed)?;
    Ok(PosteriorSampleSet::from_draws(spec, &draws, feature_names))
}

/// Per-sample predictions: hard labels (p >= 0.5 gives 1) for
/// classification, predictive means for regression. One row per sample.
pub fn posterior_predictive(samples: &PosteriorSampleSet, x_test: &Observations) -> Vec<Vec<f64>> {
    let d = samples.d();
    samples
        .rows()
        .map(|theta| {
            (0..x_test.len())
                .map(|i| {
                    let eta = linear_predictor(&theta[..d], theta[d], x_test.row(i));
                    match samples.task_kind() {
                        TaskKind::Classification => (sigmoid(eta) >= 0.5) as u8 as f64,
                        TaskKind::Regression => eta,
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

/// Accuracy or mean squared error of every posterior sample on `test`.
pub fn evaluate(samples: &PosteriorSampleSet, test: &Observations) -> Result<MetricSummary> {
    if test.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty test set".into()));
    }
    let metric = match samples.task_kind() {
        TaskKind::Classification => Metric::Accuracy,
        TaskKind::Regression => Metric::Mse,
    };
    let n = test.len() as f64;
    let per_sample: Vec<f64> = posterior_predictive(samples, test)
        .into_iter()
        .map(|pred| {
            let total: f64 = pred
                .iter()
                .zip(test.targets())
                .map(|(p, y)| match metric {
                    Metric::Accuracy => (p == y) as u8 as f64,
                    Metric::Mse => (p - y) * (p - y),
                })
                .sum();
            total / n
        })
        .collect();
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(MetricSummary { metric, per_sample, mean })
}

fn draw_noise_sd(noise: NoiseModel, rng: &mut ChaCha8Rng) -> f64 {
    match noise {
        NoiseModel::Known { sd } => sd,
        NoiseModel::HalfCauchy { scale } => {
            let u: f64 = rng.random();
            scale * (0.5 * std::f64::consts::PI * u).tan()
        }
    }
}

/// Total log-likelihood of `data` under each of `n_samples` prior draws.
/// Regression draws a noise sd from the noise prior for every sample.
pub fn prior_predictive_loglik<P: Prior>(
    spec: &LinearModelSpec<P>,
    data: &Observations,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Argument("prior predictive needs at least one data point".into()));
    }
    if data.d() != spec.d {
        return Err(Error::Argument(format!("data has {} features, model has {}", data.d(), spec.d)));
    }
    let mut rng = seed::rng(seed);
    let d = spec.d;
    Ok((0..n_samples)
        .map(|_| {
            let theta = spec.prior.draw(&mut rng);
            let sigma = match spec.task_kind {
                TaskKind::Regression => draw_noise_sd(spec.noise, &mut rng),
                TaskKind::Classification => 1.0,
            };
            (0..data.len())
                .map(|i| {
                    let eta = linear_predictor(&theta[..d], theta[d], data.row(i));
                    observation_loglik(spec.task_kind, eta, data.y[i], sigma)
                })
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests;
