//! Experiment orchestration: a TOML config in, tidy CSV/JSON reports out.
//!
//! Seeds follow `derive(config.seed, [stage, ...])` with the stage tags in
//! [`crate::seed::stage`]; cell paths are (fold, size, source) for posterior
//! curves, (demo set) for probes, (split) for selection.

mod config;
mod experiments;
mod report;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::datasets::{generate_synthetic, load_csv, render_csv, Dataset, SplitStrategy, Standardizer, TaskKind};
use crate::elicitation::{elicit_table, ElicitedPriorTable};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, ProviderKind};
use crate::icl::ModelClass;
use crate::prompts::{builtin_roles, describe, expand_role, load_roles, RoleText, TaskDescription};
use crate::seed;

pub use config::{
    Comparison, DatasetConfig, DatasetSource, ElicitationConfig, ExperimentConfig, MemorisationConfig,
    PosteriorConfig, PriorSource, ProbeConfig, PromptSet, PromptsConfig, SelectionConfig,
};
pub use experiments::{
    run_elicitation_experiment, run_elicitation_only, run_memorisation_tests, run_probe_experiment,
    run_selection_experiment,
};
pub use report::{Cell, CellFailure, RunReport, SummaryRow};

/// Everything an experiment needs once the config has been resolved.
pub struct Context {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    /// The dataset as ordered CSV text, for the memorisation tests.
    pub raw_text: String,
    pub llm: Gateway,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (dataset, raw_text) = match config.dataset.source {
            DatasetSource::Synthetic => {
                let ds = generate_synthetic(
                    config.dataset.n,
                    config.dataset.noise_sd,
                    seed::derive(config.seed, &[seed::stage::DATA]),
                )?;
                let text = render_csv(&ds);
                (ds, text)
            }
            DatasetSource::Csv => {
                let path = config.dataset.path.as_ref().expect("validated");
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                (load_csv(path, &config.dataset.schema()?)?, text)
            }
        };
        let llm = match config.provider.kind {
            ProviderKind::Mock => {
                let script = config
                    .script
                    .clone()
                    .expect("validated")
                    .with_feature_names(dataset.feature_names())
                    .with_corpus(&raw_text);
                Gateway::with_responder(&config.provider, Arc::new(script))?
            }
            _ => Gateway::from_config(&config.provider)?,
        };
        Ok(Context { config, dataset, raw_text, llm })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?)
    }

    pub fn class(&self) -> ModelClass {
        ModelClass::for_task(self.dataset.task_kind())
    }

    pub fn split_strategy(&self) -> SplitStrategy {
        self.config.dataset.split.unwrap_or(match self.dataset.task_kind() {
            TaskKind::Classification => SplitStrategy::Stratified,
            TaskKind::Regression => SplitStrategy::Plain,
        })
    }

    pub fn normalizes(&self) -> bool {
        self.config.dataset.normalize.unwrap_or(self.config.dataset.source == DatasetSource::Csv)
    }

    /// `train` and `test` standardised with statistics of `reference` when
    /// normalisation is on.
    pub fn prepare(&self, reference: &Dataset, parts: &[&Dataset]) -> Result<Vec<Dataset>> {
        if !self.normalizes() {
            return Ok(parts.iter().map(|d| (*d).clone()).collect());
        }
        let s = Standardizer::fit(reference)?;
        parts.iter().map(|d| s.transform(d)).collect()
    }

    fn expert_info(&self) -> Option<String> {
        let p = &self.config.prompts;
        p.detail.map(|d| d.statement()).or_else(|| p.expert_info.clone())
    }

    fn roles(&self, set: &PromptSet, fallback: &str) -> Result<(Vec<RoleText>, Vec<RoleText>)> {
        let p = &self.config.prompts;
        let (systems, users) = match &set.dir {
            Some(dir) => load_roles(dir)?,
            None => {
                let (s, u) = builtin_roles(set.builtin.as_deref().unwrap_or(fallback))?;
                (vec![s], vec![u])
            }
        };
        let grow = |mut roles: Vec<RoleText>, n: usize| -> Result<Vec<RoleText>> {
            if roles.len() >= n {
                roles.truncate(n);
                Ok(roles)
            } else {
                expand_role(&roles[0], n, &self.llm, p.retries)
            }
        };
        Ok((grow(systems, p.n_system_variants)?, grow(users, p.n_user_variants)?))
    }

    fn descriptions(&self, set: &PromptSet, fallback: &str) -> Result<Vec<TaskDescription>> {
        let (systems, users) = self.roles(set, fallback)?;
        describe(
            &systems,
            &users,
            self.config.prompts.k,
            self.dataset.feature_names(),
            self.dataset.target_name(),
            self.expert_info().as_deref(),
        )
    }

    /// Descriptions used to elicit priors.
    pub fn elicitation_descriptions(&self) -> Result<Vec<TaskDescription>> {
        let fallback = match self.dataset.task_kind() {
            TaskKind::Regression => "synthetic",
            TaskKind::Classification => "classification",
        };
        self.descriptions(&self.config.prompts.elicitation, fallback)
    }

    /// Descriptions used for in-context prediction.
    pub fn icl_descriptions(&self) -> Result<Vec<TaskDescription>> {
        let fallback = match self.dataset.task_kind() {
            TaskKind::Regression => "synthetic_icl",
            TaskKind::Classification => "classification_icl",
        };
        self.descriptions(&self.config.prompts.icl, fallback)
    }

    /// The configured table, or a fresh elicitation.
    pub fn elicited_table(&self) -> Result<ElicitedPriorTable> {
        if let Some(path) = &self.config.elicitation.table {
            let table = ElicitedPriorTable::load(path)?;
            if table.feature_names != self.dataset.feature_names() {
                return Err(Error::Configuration(format!(
                    "prior table {} covers features {:?}, dataset has {:?}",
                    path.display(),
                    table.feature_names,
                    self.dataset.feature_names()
                )));
            }
            return Ok(table);
        }
        let descriptions = self.elicitation_descriptions()?;
        elicit_table(
            &self.config.dataset.id,
            &descriptions,
            self.dataset.feature_names(),
            &self.llm,
            self.config.elicitation.retries,
        )
    }

    /// Write `contents` to `name` under the output directory; `name` may
    /// contain subdirectories.
    pub(crate) fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.config.output_dir.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    pub(crate) fn seed(&self, path: &[u64]) -> u64 {
        seed::derive(self.config.seed, path)
    }
}
