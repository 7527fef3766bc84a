//! Probing the model's implicit in-context predictor: fit a linear model to
//! its predictions on random inputs, with and without demonstrations.

mod kde;
mod mle;

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bayes::{LinearModelSpec, NoiseModel, Observations, Posterior};
use crate::datasets::TaskKind;
use crate::error::{Error, Result};
use crate::gateway::{strip_thinking, Gateway, Message};
use crate::prompts::TaskDescription;
use crate::sampler::{self, Draws, SamplerConfig};
use crate::seed;

pub use kde::{Kde, DEFAULT_BANDWIDTH_FACTOR};
pub use mle::{fit_mle, fit_targets, MleParamSample, PROB_CLAMP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Linear,
    Logistic,
}

impl ModelClass {
    pub fn task_kind(self) -> TaskKind {
        match self {
            ModelClass::Linear => TaskKind::Regression,
            ModelClass::Logistic => TaskKind::Classification,
        }
    }

    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Regression => ModelClass::Linear,
            TaskKind::Classification => ModelClass::Logistic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeDesign {
    pub n_points: usize,
    pub repetitions: usize,
    pub input_low: f64,
    pub input_high: f64,
    pub model_class: ModelClass,
    pub retries: usize,
}

impl Default for ProbeDesign {
    fn default() -> Self {
        ProbeDesign {
            n_points: 25,
            repetitions: 5,
            input_low: -5.0,
            input_high: 5.0,
            model_class: ModelClass::Linear,
            retries: 3,
        }
    }
}

impl ProbeDesign {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n_points < d + 1 {
            return Err(Error::Configuration(format!(
                "{} probe points cannot identify {} parameters",
                self.n_points,
                d + 1
            )));
        }
        if !(self.input_low < self.input_high) {
            return Err(Error::Configuration("probe input_low must be below input_high".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Configuration("probe repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// Uniform inputs rounded to the precision shown in prompts.
    pub fn draw_inputs(&self, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed);
        (0..self.n_points)
            .map(|_| (0..d).map(|_| round4(rng.random_range(self.input_low..self.input_high))).collect())
            .collect()
    }
}

fn round4(v: f64) -> f64 {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn fmt4(v: f64) -> String {
    format!("{:.4}", round4(v))
}

fn feature_list(row: &[f64]) -> String {
    let cells: Vec<String> = row.iter().map(|&v| fmt4(v)).collect();
    format!("[{}]", cells.join(", "))
}

/// `features: [..] -> label: y`
pub fn demo_line(row: &[f64], label: f64) -> String {
    format!("features: {} -> label: {}", feature_list(row), fmt4(label))
}

/// `features: [..] -> label: ?`
pub fn query_line(row: &[f64]) -> String {
    format!("features: {} -> label: ?", feature_list(row))
}

/// Header introducing the demonstrations in a prediction prompt.
pub const DEMO_HEADER: &str = "Labelled examples:";
/// Header introducing the rows to predict.
pub const QUERY_HEADER: &str = "Rows to predict:";
/// What a classification prediction asks for.
pub const PROBABILITY_REQUEST: &str = "the probability that the label is 1";

/// User text for a prediction request.
pub fn prediction_prompt(
    user_role: &str,
    x: &[Vec<f64>],
    demos: Option<&Observations>,
    class: ModelClass,
) -> String {
    let mut text = String::from(user_role.trim_end());
    if let Some(demos) = demos.filter(|d| !d.is_empty()) {
        text.push_str("\n\n");
        text.push_str(DEMO_HEADER);
        for i in 0..demos.len() {
            text.push('\n');
            text.push_str(&demo_line(demos.row(i), demos.targets()[i]));
        }
    }
    text.push_str("\n\n");
    text.push_str(QUERY_HEADER);
    for row in x {
        text.push('\n');
        text.push_str(&query_line(row));
    }
    let what = match class {
        ModelClass::Linear => "the predicted label",
        ModelClass::Logistic => PROBABILITY_REQUEST,
    };
    text.push_str(&format!(
        "\n\nAnswer with exactly {} lines, one per row in the order given, each of the form \"label: <value>\" where <value> is {what}.",
        x.len()
    ));
    text
}

fn number_regexes() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        let num = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?";
        (
            Regex::new(&format!(r"(?i)label\s*[:=]\s*({num})")).unwrap(),
            Regex::new(num).unwrap(),
        )
    })
}

/// Read exactly `n` predictions from a reply.
pub fn parse_predictions(reply: &str, n: usize, class: ModelClass) -> std::result::Result<Vec<f64>, String> {
    let text = strip_thinking(reply);
    let (labelled, any) = number_regexes();
    let from_labels: Vec<f64> = labelled.captures_iter(&text).filter_map(|c| c[1].parse().ok()).collect();
    let values = if from_labels.len() == n {
        from_labels
    } else if let Some(list) = json_number_list(&text).filter(|l| l.len() == n) {
        list
    } else {
        let all: Vec<f64> = any.find_iter(&text).filter_map(|m| m.as_str().parse().ok()).collect();
        if all.len() != n {
            return Err(format!("expected {n} predictions, found {}", all.len().max(from_labels.len())));
        }
        all
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite prediction".into());
    }
    if class == ModelClass::Logistic {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("probability {v} outside [0, 1]"));
        }
    }
    Ok(values)
}

fn json_number_list(text: &str) -> Option<Vec<f64>> {
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    let parsed: serde_json::Value = serde_json::from_str(text.get(start..=end)?).ok()?;
    parsed.as_array()?.iter().map(|v| v.as_f64()).collect()
}

/// In-context predictions for the rows of `x`.
pub fn icl_predict(
    llm: &Gateway,
    description: &TaskDescription,
    x: &[Vec<f64>],
    demos: Option<&Observations>,
    class: ModelClass,
    retries: usize,
) -> Result<Vec<f64>> {
    let request = llm.request(vec![
        Message::system(description.system.clone()),
        Message::user(prediction_prompt(&description.user, x, demos, class)),
    ]);
    let reminder = format!("Give exactly {} lines of the form \"label: <value>\".", x.len());
    let outcome = llm.ask(&request, retries, &reminder, |raw| parse_predictions(raw, x.len(), class))?;
    outcome.map_err(|r| {
        Error::Probe(format!(
            "description {:?} gave no usable predictions after {} attempts: {}",
            description.origin, r.attempts, r.reason
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionKind {
    Prior,
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub origin: (usize, usize),
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedDistribution {
    pub kind: ExtractionKind,
    pub samples: Vec<MleParamSample>,
    pub demos: Option<Observations>,
    pub failures: Vec<ProbeFailure>,
}

impl ExtractedDistribution {
    pub fn new(kind: ExtractionKind, samples: Vec<MleParamSample>, demos: Option<Observations>) -> Result<Self> {
        match (kind, &demos) {
            (ExtractionKind::Posterior, None) => {
                Err(Error::Argument("a posterior extraction needs demonstrations".into()))
            }
            (ExtractionKind::Prior, Some(_)) => {
                Err(Error::Argument("a prior extraction must not carry demonstrations".into()))
            }
            _ => Ok(ExtractedDistribution { kind, samples, demos, failures: Vec::new() }),
        }
    }

    pub fn phis(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.phi.clone()).collect()
    }

    /// CSV with columns origin_system.., phi coordinates, mse.
    pub fn to_csv(&self, feature_names: &[String]) -> String {
        let mut out = String::from("description,repetition");
        for n in feature_names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push_str(",bias,mse\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}", s.origin.0, s.origin.1));
            for v in &s.phi {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", s.approximation_mse));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, feature_names: &[String]) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv(feature_names)).map_err(|e| Error::io(path, e))
    }

    /// Samples from a CSV written by [`ExtractedDistribution::save_csv`].
    pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<MleParamSample>> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let mut samples = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { row: Some(i + 1), column: None, message: e.to_string() })?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { row: Some(i + 1), column: None, message: e.to_string() })?;
            if nums.len() < 4 {
                return Err(Error::Parse { row: Some(i + 1), column: None, message: "too few fields".into() });
            }
            samples.push(MleParamSample {
                origin: (nums[0] as usize, nums[1] as usize),
                phi: nums[2..nums.len() - 1].to_vec(),
                approximation_mse: nums[nums.len() - 1],
            });
        }
        Ok(samples)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Probe every description `repetitions` times on fresh inputs. Inputs for
/// (description k, repetition r) come from `derive(seed, [PROBE, k, r])`.
/// A description is retained only when all its repetitions succeed.
pub fn extract_distribution(
    llm: &Gateway,
    descriptions: &[TaskDescription],
    design: &ProbeDesign,
    d: usize,
    demos: Option<&Observations>,
    seed: u64,
) -> Result<ExtractedDistribution> {
    if descriptions.is_empty() {
        return Err(Error::Argument("no descriptions to probe".into()));
    }
    design.validate(d)?;
    let kind = if demos.is_some() { ExtractionKind::Posterior } else { ExtractionKind::Prior };
    type Outcome = std::result::Result<Vec<MleParamSample>, ProbeFailure>;
    let per_description: Vec<Result<Outcome>> = descriptions
        .par_iter()
        .enumerate()
        .map(|(k, description)| {
            let mut samples = Vec::with_capacity(design.repetitions);
            for r in 0..design.repetitions {
                let x = design.draw_inputs(d, seed::derive(seed, &[seed::stage::PROBE, k as u64, r as u64]));
                let fitted = icl_predict(llm, description, &x, demos, design.model_class, design.retries)
                    .and_then(|preds| fit_mle(&x, &preds, design.model_class));
                match fitted {
                    Ok(mut s) => {
                        s.origin = (k, r);
                        samples.push(s);
                    }
                    Err(e @ (Error::Probe(_) | Error::SingularDesign)) => {
                        return Ok(Err(ProbeFailure { origin: (k, r), reason: e.to_string() }));
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(Ok(samples))
        })
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for outcome in per_description {
        match outcome? {
            Ok(s) => samples.extend(s),
            Err(f) => {
                warn!("dropping description {}: {}", f.origin.0, f.reason);
                failures.push(f);
            }
        }
    }
    let mut dist = ExtractedDistribution::new(kind, samples, demos.cloned())?;
    dist.failures = failures;
    Ok(dist)
}

/// Settings for the Monte Carlo posterior on an extracted prior.
pub fn default_mc_config() -> SamplerConfig {
    SamplerConfig { chains: 100, samples_per_chain: 10_000, warmup: 1000, ..SamplerConfig::default() }
}

/// Sample the posterior whose prior is the KDE and whose likelihood is the
/// demonstrations under the probe's model class. Regression uses the given
/// noise model. Returns (weights, bias) draws.
pub fn mc_posterior_on_extracted_prior(
    kde: &Kde,
    data: &Observations,
    class: ModelClass,
    noise: NoiseModel,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Draws> {
    let spec = LinearModelSpec::new(class.task_kind(), kde.clone())?.with_noise(noise)?;
    if data.d() != spec.d {
        return Err(Error::Argument(format!("data has {} features, prior covers {}", data.d(), spec.d)));
    }
    let target = Posterior { spec: &spec, data };
    let mut draws = sampler::sample(&target, config, seed)?;
    if draws.dim > spec.d + 1 {
        let keep = spec.d + 1;
        for chain in &mut draws.chains {
            *chain = chain.chunks_exact(draws.dim).flat_map(|r| r[..keep].to_vec()).collect();
        }
        draws.dim = keep;
    }
    Ok(draws)
}
