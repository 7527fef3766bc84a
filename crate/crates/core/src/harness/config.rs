use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::NoiseModel;
use crate::datasets::{CsvSchema, SplitStrategy};
use crate::error::{Error, Result};
use crate::gateway::{ProviderConfig, ProviderKind};
use crate::icl::{default_mc_config, ProbeDesign, DEFAULT_BANDWIDTH_FACTOR};
use crate::memorisation::Normalisation;
use crate::prompts::presets::DetailPreset;
use crate::sampler::SamplerConfig;
use crate::scripted::Script;

/// One experiment: a dataset, a provider and the settings of every stage.
/// Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub provider: ProviderConfig,
    /// Behaviour of a `mock` provider.
    #[serde(default)]
    pub script: Option<Script>,
    #[serde(default)]
    pub prompts: PromptsConfig,
    #[serde(default)]
    pub elicitation: ElicitationConfig,
    #[serde(default)]
    pub posterior: PosteriorConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub memorisation: MemorisationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// The three-feature linear task; `n` rows with noise sd `noise_sd`.
    Synthetic,
    /// A CSV file described by `path`, `target`, `task_kind` and optionally
    /// `categorical` and `group`.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub source: DatasetSource,
    #[serde(default = "default_synthetic_n")]
    pub n: usize,
    #[serde(default = "default_synthetic_noise")]
    pub noise_sd: f64,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub task_kind: Option<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub group: Option<String>,
    /// Defaults to stratified for classification and plain for regression.
    #[serde(default)]
    pub split: Option<SplitStrategy>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to true for CSV data and false for the synthetic task.
    #[serde(default)]
    pub normalize: Option<bool>,
}

fn default_synthetic_n() -> usize {
    400
}

fn default_synthetic_noise() -> f64 {
    0.05
}

impl DatasetConfig {
    pub fn schema(&self) -> Result<CsvSchema> {
        match (&self.target, &self.task_kind) {
            (Some(target), Some(kind)) => Ok(CsvSchema {
                target: target.clone(),
                task_kind: kind.clone(),
                categorical: self.categorical.clone(),
                group: self.group.clone(),
            }),
            _ => Err(Error::Configuration("a CSV dataset needs `target` and `task_kind`".into())),
        }
    }
}

fn default_test_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSet {
    /// Built-in set name; ignored when `dir` is given.
    pub builtin: Option<String>,
    /// Directory of `system_<i>.txt` / `user_<i>.txt` files. When it holds
    /// enough variants they are used as they are; otherwise `system_0` and
    /// `user_0` are expanded by paraphrase.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    pub elicitation: PromptSet,
    pub icl: PromptSet,
    pub n_system_variants: usize,
    pub n_user_variants: usize,
    /// Number of descriptions K.
    pub k: usize,
    pub expert_info: Option<String>,
    /// Graded synthetic-task statement; overrides `expert_info`.
    pub detail: Option<DetailPreset>,
    pub retries: usize,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        PromptsConfig {
            elicitation: PromptSet::default(),
            icl: PromptSet::default(),
            n_system_variants: 10,
            n_user_variants: 10,
            k: 100,
            expert_info: None,
            detail: None,
            retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElicitationConfig {
    pub retries: usize,
    /// Load this table instead of querying the provider.
    pub table: Option<PathBuf>,
    /// Extra K values; each adds an `elicited_k<K>` prior built from the
    /// first K components.
    pub k_sweep: Vec<usize>,
}

impl Default for ElicitationConfig {
    fn default() -> Self {
        ElicitationConfig { retries: 3, table: None, k_sweep: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    Elicited,
    Uninformative,
    MixtureUninformative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    pub training_sizes: Vec<usize>,
    pub n_folds: usize,
    pub sources: Vec<PriorSource>,
    pub noise: NoiseModel,
    pub sampler: SamplerConfig,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        PosteriorConfig {
            training_sizes: vec![5, 10, 20, 50, 100],
            n_folds: 10,
            sources: vec![PriorSource::Elicited, PriorSource::Uninformative],
            noise: NoiseModel::default(),
            // Five points against five unknowns under the Half-Cauchy noise
            // prior make a funnel; at 0.8 about one uninformative cell in
            // seven trips the divergence check.
            sampler: SamplerConfig { target_accept: 0.99, ..SamplerConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub design: ProbeDesign,
    /// Also extract posteriors from demonstrations.
    pub posterior: bool,
    pub n_demo_sets: usize,
    pub demo_size: usize,
    pub bandwidth_factor: f64,
    pub n_prior_draws: usize,
    /// MC draws are thinned evenly to at most this many before the energy
    /// statistic is computed.
    pub max_energy_points: usize,
    pub noise: NoiseModel,
    pub mc: SamplerConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            design: ProbeDesign::default(),
            posterior: true,
            n_demo_sets: 5,
            demo_size: 25,
            bandwidth_factor: DEFAULT_BANDWIDTH_FACTOR,
            n_prior_draws: 10_000,
            max_energy_points: 10_000,
            noise: NoiseModel::default(),
            mc: default_mc_config(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    ElicitedVsIcl,
    ElicitedVsUninformative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub n_splits: usize,
    pub subset_size: usize,
    pub n_prior_samples: usize,
    pub comparisons: Vec<Comparison>,
    pub noise: NoiseModel,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            n_splits: 5,
            subset_size: 25,
            n_prior_samples: 500,
            comparisons: vec![Comparison::ElicitedVsIcl, Comparison::ElicitedVsUninformative],
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorisationConfig {
    pub n_seed_rows: usize,
    pub completion_tokens: u32,
    pub n_trials: usize,
    pub context_rows: usize,
    pub normalisation: Normalisation,
}

impl Default for MemorisationConfig {
    fn default() -> Self {
        MemorisationConfig {
            n_seed_rows: 10,
            completion_tokens: 500,
            n_trials: 25,
            context_rows: 10,
            normalisation: Normalisation::Max,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }

    /// Parse a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(path) = &mut self.dataset.path {
            fix(path);
        }
        if let Some(dir) = &mut self.provider.cache_dir {
            fix(dir);
        }
        for set in [&mut self.prompts.elicitation, &mut self.prompts.icl] {
            if let Some(dir) = &mut set.dir {
                fix(dir);
            }
        }
        if let Some(table) = &mut self.elicitation.table {
            fix(table);
        }
    }

    /// Switch to offline replay from the configured cache directory.
    pub fn use_replay(&mut self) -> Result<()> {
        if self.provider.cache_dir.is_none() {
            return Err(Error::Configuration("replay needs provider.cache_dir".into()));
        }
        self.provider.kind = ProviderKind::Replay;
        Ok(())
    }

    /// Hex SHA-256 over everything that determines results. The provider
    /// section and output directory are excluded, so a recorded run and its
    /// replay share a hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("serialisable config");
        if let Some(map) = value.as_object_mut() {
            map.remove("provider");
            map.remove("output_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.provider.validate()?;
        if self.provider.kind == ProviderKind::Mock && self.script.is_none() {
            return Err(Error::Configuration("a mock provider needs a [script] section".into()));
        }
        if self.dataset.source == DatasetSource::Csv {
            self.dataset.schema()?;
            match &self.dataset.path {
                Some(path) if path.exists() => {}
                Some(path) => {
                    return Err(Error::Configuration(format!("dataset file {} does not exist", path.display())))
                }
                None => return Err(Error::Configuration("a CSV dataset needs `path`".into())),
            }
        }
        for set in [&self.prompts.elicitation, &self.prompts.icl] {
            if let Some(dir) = &set.dir {
                if !dir.is_dir() {
                    return Err(Error::Configuration(format!("prompt directory {} does not exist", dir.display())));
                }
            }
        }
        if let Some(table) = &self.elicitation.table {
            if !table.exists() {
                return Err(Error::Configuration(format!("prior table {} does not exist", table.display())));
            }
        }
        let p = &self.prompts;
        if p.k == 0 || p.k > p.n_system_variants * p.n_user_variants {
            return Err(Error::Configuration(format!(
                "K = {} but only {} x {} descriptions can be formed",
                p.k, p.n_system_variants, p.n_user_variants
            )));
        }
        if self.elicitation.k_sweep.iter().any(|&k| k == 0 || k > p.k) {
            return Err(Error::Configuration(format!("every k_sweep value must lie in 1..={}", p.k)));
        }
        if self.posterior.n_folds == 0 {
            return Err(Error::Configuration("posterior.n_folds must be >= 1".into()));
        }
        if !(self.dataset.test_fraction > 0.0 && self.dataset.test_fraction < 1.0) {
            return Err(Error::Configuration("dataset.test_fraction must lie in (0, 1)".into()));
        }
        self.posterior.sampler.validate()?;
        self.probe.mc.validate()?;
        if self.probe.n_prior_draws == 0 || self.probe.max_energy_points == 0 {
            return Err(Error::Configuration("probe draw counts must be >= 1".into()));
        }
        if self.selection.subset_size == 0 || self.selection.n_splits == 0 {
            return Err(Error::Configuration("selection needs n_splits >= 1 and subset_size >= 1".into()));
        }
        Ok(())
    }
}
