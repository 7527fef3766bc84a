//! Per-description Gaussian components elicited from a language model, and
//! the equal-weight mixture prior assembled from them.

mod mixture;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gateway::{extract_json_object, strip_thinking, Gateway, Message};
use crate::prompts::TaskDescription;
use crate::seed;

pub use mixture::{build_mixture, sample_prior, MixturePrior};

pub const DEFAULT_RETRIES: usize = 3;
/// Elicited standard deviations above this are clamped.
pub const STD_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: f64,
    pub std: f64,
}

impl GaussianComponent {
    pub const STANDARD: GaussianComponent = GaussianComponent { mean: 0.0, std: 1.0 };

    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::Argument(format!("component mean {mean} is not finite")));
        }
        if !(std.is_finite() && std > 0.0) {
            return Err(Error::Argument(format!("component std {std} must be finite and positive")));
        }
        Ok(GaussianComponent { mean, std })
    }
}

/// K elicited components, one row per retained description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitedPriorTable {
    pub dataset_id: String,
    pub feature_names: Vec<String>,
    pub descriptions: Vec<TaskDescription>,
    pub components: Vec<Vec<GaussianComponent>>,
}

impl ElicitedPriorTable {
    pub fn new(
        dataset_id: impl Into<String>,
        feature_names: Vec<String>,
        descriptions: Vec<TaskDescription>,
        components: Vec<Vec<GaussianComponent>>,
    ) -> Result<Self> {
        let table = ElicitedPriorTable {
            dataset_id: dataset_id.into(),
            feature_names,
            descriptions,
            components,
        };
        table.validate()?;
        Ok(table)
    }

    /// The same components for every one of `k` rows, with no descriptions.
    pub fn constant(
        dataset_id: impl Into<String>,
        feature_names: Vec<String>,
        row: Vec<GaussianComponent>,
        k: usize,
    ) -> Result<Self> {
        Self::new(dataset_id, feature_names, Vec::new(), vec![row; k])
    }

    /// Standard-normal weights prior, K = 1.
    pub fn uninformative(dataset_id: impl Into<String>, feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        Self::constant(dataset_id, feature_names, vec![GaussianComponent::STANDARD; d], 1)
    }

    /// `k` unit-variance components whose means are standard-normal draws.
    pub fn mixture_of_uninformative(
        dataset_id: impl Into<String>,
        feature_names: Vec<String>,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = seed::rng(seed);
        let d = feature_names.len();
        let components = (0..k)
            .map(|_| {
                (0..d)
                    .map(|_| GaussianComponent { mean: rng.sample(StandardNormal), std: 1.0 })
                    .collect()
            })
            .collect();
        Self::new(dataset_id, feature_names, Vec::new(), components)
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Construction("elicited table has no components".into()));
        }
        if !self.descriptions.is_empty() && self.descriptions.len() != self.components.len() {
            return Err(Error::Construction(format!(
                "{} descriptions for {} components",
                self.descriptions.len(),
                self.components.len()
            )));
        }
        for (k, row) in self.components.iter().enumerate() {
            if row.len() != self.d() {
                return Err(Error::Construction(format!(
                    "component {k} has {} entries, expected {}",
                    row.len(),
                    self.d()
                )));
            }
            for c in row {
                GaussianComponent::new(c.mean, c.std)
                    .map_err(|e| Error::Construction(format!("component {k}: {e}")))?;
            }
        }
        Ok(())
    }

    /// The first `k` rows.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::Argument(format!("cannot keep {k} of {} components", self.k())));
        }
        let descriptions = self.descriptions.iter().take(k).cloned().collect();
        Self::new(
            self.dataset_id.clone(),
            self.feature_names.clone(),
            descriptions,
            self.components[..k].to_vec(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: ElicitedPriorTable = serde_json::from_str(&text)?;
        table.validate()?;
        Ok(table)
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn blanket_regexes() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)";
        (
            Regex::new(&format!(r"(?i)\bmean\s*(?:=|:|of|is)\s*{num}")).unwrap(),
            Regex::new(&format!(r"(?i)\b(?:std|sd|standard deviation)\s*(?:=|:|of|is)\s*{num}")).unwrap(),
        )
    })
}

/// A single mean/std pair stated for all features at once in prose.
fn parse_blanket(reply: &str) -> Option<(f64, f64)> {
    let lower = reply.to_lowercase();
    if !["every feature", "all features", "each feature", "all of the features"]
        .iter()
        .any(|p| lower.contains(p))
    {
        return None;
    }
    let (mean_re, std_re) = blanket_regexes();
    let means: Vec<f64> = mean_re.captures_iter(reply).filter_map(|c| c[1].parse().ok()).collect();
    let stds: Vec<f64> = std_re.captures_iter(reply).filter_map(|c| c[1].parse().ok()).collect();
    match (means.as_slice(), stds.as_slice()) {
        ([m], [s]) => Some((*m, *s)),
        _ => None,
    }
}

/// Validate a reply as one component per feature, keyed by exact name.
pub fn parse_component(reply: &str, feature_names: &[String]) -> std::result::Result<Vec<GaussianComponent>, String> {
    let cleaned = strip_thinking(reply);
    let Some(object) = extract_json_object(&cleaned) else {
        return match parse_blanket(&cleaned) {
            Some((mean, std)) => feature_names
                .iter()
                .map(|name| checked(name, mean, std))
                .collect(),
            None => Err("no JSON object found".to_string()),
        };
    };
    let mut by_name: BTreeMap<&str, &Value> = BTreeMap::new();
    for (key, value) in &object {
        if by_name.insert(key.trim(), value).is_some() {
            return Err(format!("feature `{}` appears twice", key.trim()));
        }
    }
    let extra: Vec<&str> = by_name
        .keys()
        .copied()
        .filter(|k| !feature_names.iter().any(|n| n == k))
        .collect();
    if !extra.is_empty() {
        return Err(format!("unexpected keys {extra:?}"));
    }
    feature_names
        .iter()
        .map(|name| {
            let entry = by_name
                .get(name.as_str())
                .ok_or_else(|| format!("missing feature `{name}`"))?;
            let field = |key: &str| {
                entry
                    .get(key)
                    .and_then(number)
                    .ok_or_else(|| format!("feature `{name}` lacks a numeric `{key}`"))
            };
            checked(name, field("mean")?, field("std")?)
        })
        .collect()
}

fn checked(name: &str, mean: f64, std: f64) -> std::result::Result<GaussianComponent, String> {
    if !mean.is_finite() {
        return Err(format!("mean for `{name}` is not finite"));
    }
    if !(std.is_finite() && std > 0.0) {
        return Err(format!("std for `{name}` must be positive, got {std}"));
    }
    let std = if std > STD_CAP {
        warn!("clamping std {std} for `{name}` to {STD_CAP}");
        STD_CAP
    } else {
        std
    };
    Ok(GaussianComponent { mean, std })
}

/// Ask for one (mean, std) per feature under `description`.
pub fn elicit_component(
    description: &TaskDescription,
    feature_names: &[String],
    llm: &Gateway,
    retries: usize,
) -> Result<Vec<GaussianComponent>> {
    let request = llm.request(vec![
        Message::system(description.system.clone()),
        Message::user(description.user.clone()),
    ]);
    let reminder = format!(
        "Reply with a JSON object whose keys are exactly {} and whose values have a numeric \"mean\" and a positive \"std\".",
        crate::prompts::render_feature_list(feature_names)
    );
    let outcome = llm.ask(&request, retries, &reminder, |raw| parse_component(raw, feature_names))?;
    outcome.map_err(|r| {
        Error::ComponentRejected(format!(
            "description {:?} rejected after {} attempts: {}",
            description.origin, r.attempts, r.reason
        ))
    })
}

/// Elicit every description concurrently. Rejected descriptions are dropped
/// with a warning; other errors abort.
pub fn elicit_table(
    dataset_id: &str,
    descriptions: &[TaskDescription],
    feature_names: &[String],
    llm: &Gateway,
    retries: usize,
) -> Result<ElicitedPriorTable> {
    let results: Vec<Result<Vec<GaussianComponent>>> = descriptions
        .par_iter()
        .map(|d| elicit_component(d, feature_names, llm, retries))
        .collect();
    let mut kept = Vec::new();
    let mut components = Vec::new();
    for (desc, result) in descriptions.iter().zip(results) {
        match result {
            Ok(row) => {
                kept.push(desc.clone());
                components.push(row);
            }
            Err(Error::ComponentRejected(msg)) => warn!("dropping description: {msg}"),
            Err(e) => return Err(e),
        }
    }
    ElicitedPriorTable::new(dataset_id, feature_names.to_vec(), kept, components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::SequenceResponder;

    fn names() -> Vec<String> {
        (0..3).map(|j| format!("feature {j}")).collect()
    }

    fn desc() -> TaskDescription {
        TaskDescription { system: "s".into(), user: "u".into(), origin: (0, 0) }
    }

    const SHARP: &str = r#"{"feature 0":{"mean":2,"std":0.1},"feature 1":{"mean":-1,"std":0.1},"feature 2":{"mean":1,"std":0.1}}"#;

    #[test]
    fn sharp_reply_parses() {
        let gw = Gateway::mock(SequenceResponder::texts([SHARP]));
        let row = elicit_component(&desc(), &names(), &gw, 3).unwrap();
        let means: Vec<f64> = row.iter().map(|c| c.mean).collect();
        assert_eq!(means, vec![2.0, -1.0, 1.0]);
        assert!(row.iter().all(|c| c.std == 0.1));
    }

    #[test]
    fn zero_std_is_reasked() {
        let bad = SHARP.replacen("0.1", "0", 1);
        let gw = Gateway::mock(SequenceResponder::texts([bad.as_str(), SHARP]));
        assert!(elicit_component(&desc(), &names(), &gw, 3).is_ok());
        assert_eq!(gw.stats().calls, 2);
        let gw = Gateway::mock(SequenceResponder::texts([bad.as_str()]));
        assert!(matches!(elicit_component(&desc(), &names(), &gw, 3), Err(Error::ComponentRejected(_))));
        assert_eq!(gw.stats().calls, 4);
    }

    #[test]
    fn blanket_prose_reply_is_uninformative() {
        let row = parse_component("I'd use mean = 0 and std = 1 for every feature.", &names()).unwrap();
        assert_eq!(row, vec![GaussianComponent::STANDARD; 3]);
    }

    #[test]
    fn key_mismatches_are_rejected() {
        let extra = SHARP.replace("}}", r#"},"feature 3":{"mean":0,"std":1}}"#);
        assert!(parse_component(&extra, &names()).unwrap_err().contains("unexpected"));
        let missing = r#"{"feature 0":{"mean":2,"std":0.1}}"#;
        assert!(parse_component(missing, &names()).unwrap_err().contains("missing"));
    }

    #[test]
    fn large_std_is_clamped() {
        let wide = SHARP.replacen("0.1", "1e6", 1);
        let row = parse_component(&wide, &names()).unwrap();
        assert_eq!(row[0].std, STD_CAP);
    }

    #[test]
    fn string_numbers_and_fences_are_accepted() {
        let text = format!("```json\n{}\n```", SHARP.replace("\"mean\":2", "\"mean\":\"2\""));
        assert_eq!(parse_component(&text, &names()).unwrap()[0].mean, 2.0);
    }

    #[test]
    fn table_drops_rejected_descriptions() {
        let descs: Vec<TaskDescription> = (0..3)
            .map(|i| TaskDescription { system: "s".into(), user: format!("u{i}"), origin: (0, i) })
            .collect();
        let gw = Gateway::mock(|r: &crate::gateway::ChatRequest| {
            Ok(if r.user_text().starts_with("u1") { "no idea".to_string() } else { SHARP.to_string() })
        });
        let table = elicit_table("synthetic", &descs, &names(), &gw, 1).unwrap();
        assert_eq!(table.k(), 2);
        assert_eq!(table.descriptions.iter().map(|d| d.origin.1).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn table_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.json");
        let table = ElicitedPriorTable::mixture_of_uninformative("x", names(), 5, 3).unwrap();
        table.save(&path).unwrap();
        assert_eq!(ElicitedPriorTable::load(&path).unwrap(), table);
        let raw: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(raw.get("components").unwrap()[0][0].get("std").is_some());
    }

    #[test]
    fn empty_table_is_a_construction_error() {
        assert!(matches!(ElicitedPriorTable::new("x", names(), vec![], vec![]), Err(Error::Construction(_))));
    }
}
