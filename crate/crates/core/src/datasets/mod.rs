//! Tabular predictive tasks: construction, synthetic generation, splitting,
//! standardisation and CSV I/O.

mod csv_io;
mod folds;
mod normalize;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, parse_csv, render_csv, write_csv, CsvSchema};
pub use folds::{make_folds, subsample_train, Fold, SplitStrategy};
pub use normalize::{normalize, Standardizer};
pub use synthetic::{generate_synthetic, synthetic_target, SYNTHETIC_WEIGHTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::parse(format!("unknown task kind `{other}`"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        })
    }
}

/// A feature matrix with targets and metadata. Rows keep their source order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    targets: Vec<f64>,
    feature_names: Vec<String>,
    target_name: String,
    task_kind: TaskKind,
    group_ids: Option<Vec<String>>,
    categorical_mask: Vec<bool>,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        task_kind: TaskKind,
    ) -> Result<Self> {
        let n = rows.len();
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::Argument("dataset needs at least one feature".into()));
        }
        if targets.len() != n {
            return Err(Error::Argument(format!(
                "{} rows but {} targets",
                n,
                targets.len()
            )));
        }
        let mut features = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::Argument(format!(
                    "row {i} has {} values, expected {d}",
                    row.len()
                )));
            }
            features.extend(row);
        }
        Self::from_parts(features, n, targets, feature_names, target_name.into(), task_kind)
    }

    fn from_parts(
        features: Vec<f64>,
        n: usize,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        target_name: String,
        task_kind: TaskKind,
    ) -> Result<Self> {
        let d = feature_names.len();
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Argument(format!("duplicate feature name `{name}`")));
            }
        }
        if task_kind == TaskKind::Classification {
            if let Some(i) = targets.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::Argument(format!(
                    "classification target at row {i} is {}, expected 0 or 1",
                    targets[i]
                )));
            }
        }
        Ok(Dataset {
            features,
            n,
            d,
            targets,
            feature_names,
            target_name,
            task_kind,
            group_ids: None,
            categorical_mask: vec![false; d],
        })
    }

    pub fn with_group_ids(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.n {
            return Err(Error::Argument(format!(
                "{} group ids for {} rows",
                groups.len(),
                self.n
            )));
        }
        self.group_ids = Some(groups);
        Ok(self)
    }

    pub fn with_categorical_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.d {
            return Err(Error::Argument(format!(
                "categorical mask has {} entries for {} features",
                mask.len(),
                self.d
            )));
        }
        self.categorical_mask = mask;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.features[i * self.d + j]).collect()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn group_ids(&self) -> Option<&[String]> {
        self.group_ids.as_deref()
    }

    pub fn categorical_mask(&self) -> &[bool] {
        &self.categorical_mask
    }

    /// Rows at `indices`, in the given order, with all metadata carried over.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n: indices.len(),
            d: self.d,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            task_kind: self.task_kind,
            group_ids: self
                .group_ids
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
            categorical_mask: self.categorical_mask.clone(),
        }
    }

    pub(crate) fn map_features(&self, mut f: impl FnMut(usize, f64) -> f64) -> Dataset {
        let d = self.d;
        let features = self
            .features
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k % d, v))
            .collect();
        Dataset {
            features,
            ..self.clone()
        }
    }
}
