//! Energy statistic between sample sets, and log Bayes factors between the
//! prior predictive of an elicited prior and that of in-context learning.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::Observations;
use crate::elicitation::MixturePrior;
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::icl::{icl_predict, ExtractedDistribution, ModelClass, PROB_CLAMP};
use crate::math;
use crate::prompts::TaskDescription;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyResult {
    pub distance_sq: f64,
    pub statistic: f64,
    pub n_x: usize,
    pub n_y: usize,
}

/// How within-sample mean distances treat the zero diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WithinMean {
    /// Mean over all n² ordered pairs; keeps the statistic in [0, 1].
    #[default]
    Biased,
    /// Mean over the n(n-1) off-diagonal pairs; can go negative.
    Unbiased,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

// Per-row partial sums are collected in index order and added sequentially,
// so the result does not depend on the thread schedule.
fn cross_sum(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = x.par_iter().map(|a| y.iter().map(|b| euclid(a, b)).sum()).collect();
    rows.iter().sum()
}

fn within_sum(x: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| x[i + 1..].iter().map(|b| euclid(&x[i], b)).sum())
        .collect();
    2.0 * rows.iter().sum::<f64>()
}

fn check_sets(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("energy needs two non-empty sample sets".into()));
    }
    let d = x[0].len();
    if x.iter().chain(y).any(|r| r.len() != d) {
        return Err(Error::Argument("energy samples differ in dimension".into()));
    }
    Ok(d)
}

pub fn energy(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<EnergyResult> {
    energy_with(x, y, WithinMean::Biased)
}

/// Squared energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| and its scaled form
/// D² / (2E|X-Y|). All points identical across both sets gives 0.
pub fn energy_with(x: &[Vec<f64>], y: &[Vec<f64>], within: WithinMean) -> Result<EnergyResult> {
    check_sets(x, y)?;
    let (n_x, n_y) = (x.len(), y.len());
    let (xs, ys) = (sorted(x), sorted(y));
    if within == WithinMean::Biased && xs == ys {
        return Ok(EnergyResult { distance_sq: 0.0, statistic: 0.0, n_x, n_y });
    }
    // A fixed argument order makes swapping the inputs bit-for-bit neutral.
    let (x, y) = if rows_cmp(&xs, &ys).is_le() { (x, y) } else { (y, x) };
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let exy = cross_sum(x, y) / (nx * ny);
    let pairs = |n: f64| match within {
        WithinMean::Biased => n * n,
        WithinMean::Unbiased => (n * (n - 1.0)).max(1.0),
    };
    let exx = within_sum(x) / pairs(nx);
    let eyy = within_sum(y) / pairs(ny);
    let mut distance_sq = 2.0 * exy - (exx + eyy);
    if within == WithinMean::Biased {
        // Exact arithmetic gives D² ≥ 0; clear rounding below zero.
        distance_sq = distance_sq.max(0.0);
    }
    let statistic = if exy == 0.0 { 0.0 } else { distance_sq / (2.0 * exy) };
    Ok(EnergyResult { distance_sq, statistic, n_x, n_y })
}

fn sorted(x: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    rows.sort_by(|a, b| row_cmp(a, b));
    rows
}

fn row_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(a.len().cmp(&b.len()))
}

fn rows_cmp(a: &[&[f64]], b: &[&[f64]]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter().zip(b).map(|(u, v)| row_cmp(u, v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Energy between `n` draws of the elicited prior and the extracted samples,
/// both over (weights, bias).
pub fn compare_elicited_vs_extracted(
    prior: &MixturePrior,
    extracted: &ExtractedDistribution,
    n: usize,
    seed: u64,
) -> Result<EnergyResult> {
    if n == 0 {
        return Err(Error::Argument("need at least one prior draw".into()));
    }
    let phis = extracted.phis();
    if phis.first().is_some_and(|p| p.len() != prior.dim()) {
        return Err(Error::Argument(format!(
            "extracted samples have {} coordinates, prior has {}",
            phis[0].len(),
            prior.dim()
        )));
    }
    energy(&prior.sample(n, seed), &phis)
}

/// Log-likelihood of one label given an in-context prediction. Regression
/// predictions are scored as N(prediction, 1); probabilities are clamped to
/// [PROB_CLAMP, 1 - PROB_CLAMP].
pub fn prediction_loglik(class: ModelClass, prediction: f64, y: f64) -> f64 {
    match class {
        ModelClass::Linear => math::normal_log_pdf(y, prediction, 1.0),
        ModelClass::Logistic => {
            let p = prediction.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        }
    }
}

/// Total log-likelihood of `data` under each description's in-context
/// predictions. Descriptions whose probe fails are dropped with a warning.
pub fn icl_prior_predictive_loglik(
    llm: &Gateway,
    descriptions: &[TaskDescription],
    data: &Observations,
    class: ModelClass,
    retries: usize,
) -> Result<Vec<f64>> {
    if data.is_empty() || descriptions.is_empty() {
        return Err(Error::Argument("need descriptions and at least one data point".into()));
    }
    let x: Vec<Vec<f64>> = (0..data.len()).map(|i| data.row(i).to_vec()).collect();
    let outcomes: Vec<Result<Option<f64>>> = descriptions
        .par_iter()
        .map(|desc| match icl_predict(llm, desc, &x, None, class, retries) {
            Ok(preds) => Ok(Some(
                preds.iter().zip(data.targets()).map(|(&p, &y)| prediction_loglik(class, p, y)).sum(),
            )),
            Err(Error::Probe(reason)) => {
                warn!("dropping description {:?} from the prior predictive: {reason}", desc.origin);
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect();
    let values: Vec<f64> = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::Probe("every description failed".into()));
    }
    Ok(values)
}

/// mean(a) - mean(b); positive favours `a`.
pub fn bayes_factor(loglik_a: &[f64], loglik_b: &[f64]) -> Result<f64> {
    if loglik_a.is_empty() || loglik_b.is_empty() {
        return Err(Error::Argument("Bayes factor needs non-empty log-likelihood vectors".into()));
    }
    Ok(math::mean(loglik_a) - math::mean(loglik_b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBayesFactor {
    pub split: usize,
    pub mean_loglik_a: f64,
    pub mean_loglik_b: f64,
    pub log_bf: f64,
}

/// One JSON record per (split, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorRecord {
    pub dataset: String,
    pub split: usize,
    pub method: String,
    pub mean_loglik: f64,
    pub log_bf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorReport {
    pub dataset: String,
    pub method_a: String,
    pub method_b: String,
    pub splits: Vec<SplitBayesFactor>,
    pub mean: f64,
    /// Sample standard deviation over splits; 0 for a single split.
    pub sd: f64,
}

impl BayesFactorReport {
    /// `per_split` holds (log-likelihoods under a, under b) for each split.
    pub fn from_splits(
        dataset: &str,
        method_a: &str,
        method_b: &str,
        per_split: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self> {
        let splits = per_split
            .iter()
            .enumerate()
            .map(|(split, (a, b))| {
                Ok(SplitBayesFactor {
                    split,
                    mean_loglik_a: math::mean(a),
                    mean_loglik_b: math::mean(b),
                    log_bf: bayes_factor(a, b)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let bfs: Vec<f64> = splits.iter().map(|s| s.log_bf).collect();
        let sd = if bfs.len() > 1 { math::sample_sd(&bfs) } else { 0.0 };
        Ok(BayesFactorReport {
            dataset: dataset.into(),
            method_a: method_a.into(),
            method_b: method_b.into(),
            mean: if bfs.is_empty() { f64::NAN } else { math::mean(&bfs) },
            sd,
            splits,
        })
    }

    pub fn records(&self) -> Vec<BayesFactorRecord> {
        self.splits
            .iter()
            .flat_map(|s| {
                [(&self.method_a, s.mean_loglik_a), (&self.method_b, s.mean_loglik_b)].map(|(m, ll)| BayesFactorRecord {
                    dataset: self.dataset.clone(),
                    split: s.split,
                    method: m.clone(),
                    mean_loglik: ll,
                    log_bf: s.log_bf,
                })
            })
            .collect()
    }

    /// `dataset,split,method,mean_loglik,log_bf` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,split,method,mean_loglik,log_bf\n");
        for r in self.records() {
            out.push_str(&format!("{},{},{},{},{}\n", r.dataset, r.split, r.method, r.mean_loglik, r.log_bf));
        }
        out
    }
}
