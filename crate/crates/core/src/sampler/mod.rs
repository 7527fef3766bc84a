//! Gradient-based MCMC over any differentiable log density.

mod adapt;
mod ess;
mod nuts;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use adapt::{DualAveraging, MetricWindows};
use nuts::Integrator;

pub use ess::effective_sample_size;

/// A target density known up to a constant.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `x`, writing its gradient into `grad`. Non-finite
    /// values are allowed and treated as zero density by the sampler.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    Nuts,
    /// Fixed trajectory length; for debugging only.
    StaticHmc { steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub samples_per_chain: usize,
    pub warmup: usize,
    pub max_depth: usize,
    pub target_accept: f64,
    pub algorithm: Algorithm,
    pub max_divergence_rate: f64,
    /// Initial points are uniform on [-r, r] in every coordinate.
    pub init_radius: f64,
    pub adapt_metric: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 5,
            samples_per_chain: 5000,
            warmup: 1000,
            max_depth: 10,
            target_accept: 0.8,
            algorithm: Algorithm::Nuts,
            max_divergence_rate: 0.1,
            init_radius: 2.0,
            adapt_metric: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.samples_per_chain == 0 {
            return Err(Error::Configuration("sampler needs at least one chain and one draw".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Configuration(format!("target_accept {} outside (0, 1)", self.target_accept)));
        }
        if self.max_depth == 0 {
            return Err(Error::Configuration("max_depth must be >= 1".into()));
        }
        if let Algorithm::StaticHmc { steps: 0 } = self.algorithm {
            return Err(Error::Configuration("static HMC needs at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub seed: u64,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub mean_accept_stat: f64,
    pub divergences: usize,
    pub mean_tree_depth: f64,
    pub max_depth_hits: usize,
    pub leapfrog_steps: u64,
}

/// Retained draws, chain by chain, each stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub dim: usize,
    pub samples_per_chain: usize,
    pub chains: Vec<Vec<f64>>,
    pub diagnostics: Vec<ChainDiagnostics>,
}

impl Draws {
    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        &self.chains[chain][i * self.dim..(i + 1) * self.dim]
    }

    /// All draws in chain order.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(move |c| c.chunks_exact(self.dim))
    }

    pub fn coordinate(&self, chain: usize, j: usize) -> Vec<f64> {
        self.chains[chain].iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.chains.len() * self.samples_per_chain
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.rows().map(|r| r[j]).sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self, j: usize) -> f64 {
        let m = self.mean(j);
        self.rows().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (self.len() - 1) as f64
    }

    pub fn ess(&self, j: usize) -> f64 {
        let coords: Vec<Vec<f64>> = (0..self.chains.len()).map(|c| self.coordinate(c, j)).collect();
        let refs: Vec<&[f64]> = coords.iter().map(|c| c.as_slice()).collect();
        effective_sample_size(&refs)
    }

    /// Monte Carlo standard error of the mean of coordinate `j`.
    pub fn mcse(&self, j: usize) -> f64 {
        (self.variance(j) / self.ess(j)).sqrt()
    }

    pub fn divergences(&self) -> usize {
        self.diagnostics.iter().map(|d| d.divergences).sum()
    }
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
    chain_seed: u64,
) -> Result<(Vec<f64>, ChainDiagnostics)> {
    let dim = target.dim();
    let mut integrator = Integrator {
        target,
        inv_metric: vec![1.0; dim],
        step_size: 1.0,
        rng: seed::rng(chain_seed),
    };

    let mut current = None;
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim)
            .map(|_| integrator.rng.random_range(-config.init_radius..=config.init_radius))
            .collect();
        let s = integrator.state_at(q);
        if s.logp.is_finite() && s.grad.iter().all(|g| g.is_finite()) {
            current = Some(s);
            break;
        }
    }
    let mut current = current.ok_or_else(|| {
        Error::SamplerHealth(format!("chain {chain}: no finite initial point in 100 attempts"))
    })?;

    let step = |integ: &mut Integrator<T>, s: &mut nuts::State| match config.algorithm {
        Algorithm::Nuts => integ.nuts(s, config.max_depth),
        Algorithm::StaticHmc { steps } => integ.static_hmc(s, steps),
    };

    integrator.init_step_size(&current);
    let mut dual = DualAveraging::new(config.target_accept);
    dual.restart(integrator.step_size);
    let mut windows = MetricWindows::new(dim, config.warmup);
    for _ in 0..config.warmup {
        let info = step(&mut integrator, &mut current);
        integrator.step_size = dual.learn(info.accept_stat);
        if let Some(var) = windows.observe(&current.q) {
            if config.adapt_metric {
                integrator.inv_metric = var;
                integrator.init_step_size(&current);
                dual.restart(integrator.step_size);
            }
        }
    }
    if config.warmup > 0 {
        integrator.step_size = dual.final_step_size();
    }

    let mut out = Vec::with_capacity(config.samples_per_chain * dim);
    let (mut accept, mut depth, mut divergences, mut hits, mut leapfrogs) = (0.0, 0usize, 0, 0, 0u64);
    for _ in 0..config.samples_per_chain {
        let info = step(&mut integrator, &mut current);
        accept += info.accept_stat;
        depth += info.depth;
        divergences += info.divergent as usize;
        hits += (info.depth >= config.max_depth) as usize;
        leapfrogs += info.n_leapfrog;
        out.extend_from_slice(&current.q);
    }
    let n = config.samples_per_chain as f64;
    Ok((
        out,
        ChainDiagnostics {
            chain,
            seed: chain_seed,
            step_size: integrator.step_size,
            inv_metric: integrator.inv_metric,
            mean_accept_stat: accept / n,
            divergences,
            mean_tree_depth: depth as f64 / n,
            max_depth_hits: hits,
            leapfrog_steps: leapfrogs,
        },
    ))
}

/// Run `config.chains` independent chains in parallel. Chain `c` is seeded
/// with `derive(seed, [c])`.
pub fn sample<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, seed: u64) -> Result<Draws> {
    config.validate()?;
    let results: Vec<(Vec<f64>, ChainDiagnostics)> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c, seed::derive(seed, &[c as u64])))
        .collect::<Result<_>>()?;
    let (chains, diagnostics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let draws = Draws {
        dim: target.dim(),
        samples_per_chain: config.samples_per_chain,
        chains,
        diagnostics,
    };
    let rate = draws.divergences() as f64 / draws.len() as f64;
    if rate > config.max_divergence_rate {
        return Err(Error::SamplerHealth(format!(
            "divergence rate {:.3} exceeds {:.3}; diagnostics: {}",
            rate,
            config.max_divergence_rate,
            serde_json::to_string(&draws.diagnostics).unwrap_or_default()
        )));
    }
    Ok(draws)
}
