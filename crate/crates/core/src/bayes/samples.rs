use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LinearModelSpec, NoiseModel, Prior};
use crate::datasets::TaskKind;
use crate::error::{Error, Result};
use crate::sampler::{ChainDiagnostics, Draws};

/// Retained posterior draws on the natural scale: weights, bias, and for
/// regression the noise sd.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSampleSet {
    task_kind: TaskKind,
    columns: Vec<String>,
    d: usize,
    values: Vec<f64>,
    chain_ids: Vec<usize>,
    diagnostics: Vec<ChainDiagnostics>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    task_kind: TaskKind,
    d: usize,
    columns: Vec<String>,
    diagnostics: Vec<ChainDiagnostics>,
}

impl PosteriorSampleSet {
    pub(super) fn from_draws<P: Prior>(
        spec: &LinearModelSpec<P>,
        draws: &Draws,
        feature_names: &[String],
    ) -> Self {
        let d = spec.d;
        let mut columns: Vec<String> = feature_names.to_vec();
        columns.push("bias".into());
        let regression = spec.task_kind == TaskKind::Regression;
        if regression {
            columns.push("noise".into());
        }
        let width = columns.len();
        let mut values = Vec::with_capacity(draws.len() * width);
        let mut chain_ids = Vec::with_capacity(draws.len());
        for (c, chain) in draws.chains.iter().enumerate() {
            for q in chain.chunks_exact(draws.dim) {
                values.extend_from_slice(&q[..=d]);
                if regression {
                    values.push(match spec.noise {
                        NoiseModel::HalfCauchy { .. } => q[d + 1].exp(),
                        NoiseModel::Known { sd } => sd,
                    });
                }
                chain_ids.push(c);
            }
        }
        PosteriorSampleSet {
            task_kind: spec.task_kind,
            columns,
            d,
            values,
            chain_ids,
            diagnostics: draws.diagnostics.clone(),
        }
    }

    /// Build directly from rows of (weights.., bias[, noise]).
    pub fn from_rows(
        task_kind: TaskKind,
        feature_names: &[String],
        rows: &[Vec<f64>],
        chain_ids: Vec<usize>,
    ) -> Result<Self> {
        let d = feature_names.len();
        let mut columns = feature_names.to_vec();
        columns.push("bias".into());
        if task_kind == TaskKind::Regression {
            columns.push("noise".into());
        }
        if rows.len() != chain_ids.len() {
            return Err(Error::Argument("one chain id per row is required".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::Argument(format!("row of width {} where {} expected", r.len(), columns.len())));
        }
        if task_kind == TaskKind::Regression && rows.iter().any(|r| !(r[d + 1] > 0.0)) {
            return Err(Error::Argument("noise column must be positive".into()));
        }
        Ok(PosteriorSampleSet {
            task_kind,
            columns,
            d,
            values: rows.concat(),
            chain_ids,
            diagnostics: Vec::new(),
        })
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_ids.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.columns.len())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Weights and bias only.
    pub fn parameters(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r[..=self.d].to_vec()).collect()
    }

    pub fn chain_ids(&self) -> &[usize] {
        &self.chain_ids
    }

    pub fn diagnostics(&self) -> &[ChainDiagnostics] {
        &self.diagnostics
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.rows().map(|r| r[j]).sum::<f64>() / self.len() as f64
    }

    /// Write `<stem>.csv` and the `<stem>.json` diagnostics sidecar.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)
            .map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
        let io = |e: csv::Error| Error::io(&csv_path, std::io::Error::other(e));
        let mut header = vec!["chain".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (row, chain) in self.rows().zip(&self.chain_ids) {
            let mut rec = vec![chain.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let sidecar = Sidecar {
            task_kind: self.task_kind,
            d: self.d,
            columns: self.columns.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let json_path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut r = csv::Reader::from_path(&csv_path)
            .map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
        let mut values = Vec::new();
        let mut chain_ids = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { row: Some(i + 1), column: None, message: e.to_string() })?;
            if rec.len() != sidecar.columns.len() + 1 {
                return Err(Error::Parse { row: Some(i + 1), column: None, message: "wrong field count".into() });
            }
            let parse = |j: usize| -> Result<f64> {
                rec[j].parse().map_err(|_| Error::Parse {
                    row: Some(i + 1),
                    column: Some(if j == 0 { "chain".into() } else { sidecar.columns[j - 1].clone() }),
                    message: format!("`{}` is not a number", &rec[j]),
                })
            };
            chain_ids.push(parse(0)? as usize);
            for j in 1..rec.len() {
                values.push(parse(j)?);
            }
        }
        Ok(PosteriorSampleSet {
            task_kind: sidecar.task_kind,
            columns: sidecar.columns,
            d: sidecar.d,
            values,
            chain_ids,
            diagnostics: sidecar.diagnostics,
        })
    }
}
