use serde::{Deserialize, Serialize};

use crate::math;

/// One measured value in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub fold: Option<usize>,
    pub size: Option<usize>,
    pub source: String,
    pub split: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl Cell {
    pub fn new(source: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        Cell { fold: None, size: None, source: source.into(), split: None, metric: metric.into(), value }
    }

    pub fn fold(mut self, fold: usize) -> Self {
        self.fold = Some(fold);
        self
    }

    pub fn size(mut self, size: usize) -> Self {
        self.size = Some(size);
        self
    }

    pub fn split(mut self, split: usize) -> Self {
        self.split = Some(split);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub reason: String,
}

/// Mean over folds with a normal-approximation 95% interval of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub size: usize,
    pub source: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SummaryRow {
    pub fn from_values(size: usize, source: &str, metric: &str, values: &[f64]) -> Self {
        let n = values.len();
        let mean = math::mean(values);
        let sd = if n > 1 { math::sample_sd(values) } else { 0.0 };
        let half = 1.96 * sd / (n as f64).sqrt();
        SummaryRow {
            size,
            source: source.into(),
            metric: metric.into(),
            n,
            mean,
            sd,
            ci_low: mean - half,
            ci_high: mean + half,
        }
    }
}

/// Outcome of one experiment. Contains nothing run-dependent, so identical
/// configs give byte-identical serialisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub name: String,
    pub dataset: String,
    pub config_hash: String,
    pub cells: Vec<Cell>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
}

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from("dataset,fold,size,source,split,metric,value\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.dataset,
                opt(c.fold),
                opt(c.size),
                c.source,
                opt(c.split),
                c.metric,
                c.value
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("dataset,size,source,metric,n,mean,sd,ci_low,ci_high\n");
        for r in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.dataset, r.size, r.source, r.metric, r.n, r.mean, r.sd, r.ci_low, r.ci_high
            ));
        }
        out
    }

    /// Values of `metric` for `source`, in cell order.
    pub fn values(&self, source: &str, metric: &str) -> Vec<&Cell> {
        self.cells.iter().filter(|c| c.source == source && c.metric == metric).collect()
    }
}
