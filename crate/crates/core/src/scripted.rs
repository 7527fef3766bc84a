//! Offline scripted providers. A [`Script`] recognises the four kinds of
//! request this crate sends (paraphrase, elicitation, in-context prediction,
//! CSV completion) and answers each with a configurable, deterministic rule.
//! Randomised rules draw from a generator seeded by the request hash, so the
//! same prompt always gets the same reply.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Responder};
use crate::icl::{PROBABILITY_REQUEST, QUERY_HEADER};
use crate::math::{dot, sigmoid};
use crate::memorisation::{COMPLETION_SYSTEM, ROW_PROMPT_HEAD, ROW_PROMPT_TAIL};
use crate::prompts::PARAPHRASE_INSTRUCTION;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    Paraphrase,
    Elicitation,
    Prediction,
    Completion,
}

pub fn classify(request: &ChatRequest) -> RequestKind {
    let system = request.system_text();
    if system == PARAPHRASE_INSTRUCTION {
        RequestKind::Paraphrase
    } else if system == COMPLETION_SYSTEM {
        RequestKind::Completion
    } else if request.user_text().contains(QUERY_HEADER) {
        RequestKind::Prediction
    } else {
        RequestKind::Elicitation
    }
}

fn line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"features: \[([^\]]*)\] -> label: (\?|[-+0-9.eE]+)").unwrap())
}

fn parse_row(cells: &str) -> Vec<f64> {
    cells.split(',').filter_map(|c| c.trim().parse().ok()).collect()
}

/// Query rows of a prediction prompt, in order.
pub fn parse_queries(text: &str) -> Vec<Vec<f64>> {
    line_regex()
        .captures_iter(text)
        .filter(|c| &c[2] == "?")
        .map(|c| parse_row(&c[1]))
        .collect()
}

/// Demonstrations of a prediction prompt as (features, label).
pub fn parse_demos(text: &str) -> Vec<(Vec<f64>, f64)> {
    line_regex()
        .captures_iter(text)
        .filter_map(|c| c[2].parse().ok().map(|y| (parse_row(&c[1]), y)))
        .collect()
}

/// Per-feature Gaussian stated in every elicitation reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedElicitation {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictionRule {
    /// One fixed linear rule; classification replies apply the sigmoid.
    Planted { weights: Vec<f64>, bias: f64 },
    /// Draw fresh parameters per prompt: weights from independent normals,
    /// bias from N(0, bias_std²). With `noise_sd` set and demonstrations
    /// present (regression only) the draw comes from the exact conjugate
    /// posterior under Gaussian noise of that sd; otherwise demonstrations
    /// are ignored.
    PriorDraw {
        means: Vec<f64>,
        stds: Vec<f64>,
        #[serde(default = "one")]
        bias_std: f64,
        #[serde(default)]
        noise_sd: Option<f64>,
    },
    /// The same value for every row.
    Constant { value: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompletionRule {
    /// Reproduce the corpus verbatim.
    Echo,
    /// The echo reply with every character replaced by `fill`.
    Garbage { fill: char },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    pub seed: u64,
    pub elicitation: Option<FixedElicitation>,
    pub prediction: Option<PredictionRule>,
    pub completion: Option<CompletionRule>,
    /// Keys of the elicitation reply; set by the caller from the dataset.
    #[serde(skip)]
    pub feature_names: Vec<String>,
    /// Text the completion rules reproduce; set by the caller.
    #[serde(skip)]
    pub corpus: String,
}

const ECHO_HEADER_CHARS: usize = 2000;

impl Script {
    pub fn with_feature_names(mut self, names: &[String]) -> Self {
        self.feature_names = names.to_vec();
        self
    }

    pub fn with_corpus(mut self, text: &str) -> Self {
        self.corpus = text.lines().filter(|l| !l.trim().is_empty()).collect::<Vec<_>>().join("\n");
        self
    }

    fn unsupported(what: &str) -> Error {
        Error::Configuration(format!("script has no rule for {what} requests"))
    }

    fn request_seed(&self, request: &ChatRequest) -> u64 {
        let key = request.cache_key();
        seed::derive(self.seed, &[u64::from_str_radix(&key[..16], 16).expect("hex key")])
    }

    fn paraphrase(&self, request: &ChatRequest) -> Result<String> {
        let user = request.messages.iter().find(|m| m.role == crate::gateway::Role::User);
        let text = user.map(|m| m.content.as_str()).unwrap_or_default();
        let (head, template) = text.split_once('\n').unwrap_or(("", text));
        let index = head.trim_start_matches("Rephrasing ").trim_end_matches(':');
        Ok(format!("In other words (version {index}): {template}"))
    }

    fn elicit(&self) -> Result<String> {
        let rule = self.elicitation.as_ref().ok_or_else(|| Self::unsupported("elicitation"))?;
        if rule.means.len() != self.feature_names.len() || rule.stds.len() != self.feature_names.len() {
            return Err(Error::Configuration(format!(
                "scripted elicitation gives {} means and {} stds for {} features",
                rule.means.len(),
                rule.stds.len(),
                self.feature_names.len()
            )));
        }
        let body: serde_json::Map<String, serde_json::Value> = self
            .feature_names
            .iter()
            .zip(rule.means.iter().zip(&rule.stds))
            .map(|(n, (m, s))| (n.clone(), serde_json::json!({ "mean": m, "std": s })))
            .collect();
        Ok(serde_json::Value::Object(body).to_string())
    }

    fn predict(&self, request: &ChatRequest) -> Result<String> {
        let rule = self.prediction.as_ref().ok_or_else(|| Self::unsupported("prediction"))?;
        let text = request.user_text();
        let queries = parse_queries(&text);
        let probability = text.contains(PROBABILITY_REQUEST);
        let phi = match rule {
            PredictionRule::Planted { weights, bias } => {
                let mut phi = weights.clone();
                phi.push(*bias);
                phi
            }
            PredictionRule::PriorDraw { means, stds, bias_std, noise_sd } => {
                let demos = parse_demos(&text);
                let mut rng = seed::rng(self.request_seed(request));
                let mut prior_mean = means.clone();
                prior_mean.push(0.0);
                let mut prior_sd = stds.clone();
                prior_sd.push(*bias_std);
                match noise_sd {
                    Some(sd) if !demos.is_empty() && !probability => {
                        conjugate_draw(&prior_mean, &prior_sd, &demos, *sd, &mut rng)?
                    }
                    _ => prior_mean
                        .iter()
                        .zip(&prior_sd)
                        .map(|(m, s)| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + s * z
                        })
                        .collect(),
                }
            }
            PredictionRule::Constant { value } => {
                return Ok(queries.iter().map(|_| format!("label: {value}\n")).collect());
            }
        };
        let d = phi.len() - 1;
        let mut reply = String::new();
        for x in &queries {
            if x.len() != d {
                return Err(Error::Configuration(format!("query has {} features, rule has {d}", x.len())));
            }
            let eta = dot(&phi[..d], x) + phi[d];
            let value = if probability { sigmoid(eta) } else { eta };
            reply.push_str(&format!("label: {value}\n"));
        }
        Ok(reply)
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let rule = self.completion.ok_or_else(|| Self::unsupported("completion"))?;
        let text = request.user_text();
        let echo = match text.strip_prefix(ROW_PROMPT_HEAD).and_then(|t| t.strip_suffix(ROW_PROMPT_TAIL)) {
            Some(block) => self
                .corpus
                .find(block)
                .and_then(|at| self.corpus[at + block.len()..].strip_prefix('\n'))
                .and_then(|rest| rest.lines().next())
                .unwrap_or_default()
                .to_string(),
            None => match self.corpus.strip_prefix(text.as_str()) {
                Some(rest) => rest.chars().take(ECHO_HEADER_CHARS).collect(),
                None => String::new(),
            },
        };
        Ok(match rule {
            CompletionRule::Echo => echo,
            CompletionRule::Garbage { fill } => echo.chars().map(|_| fill).collect(),
        })
    }
}

/// One draw from the Gaussian posterior over (weights, bias) given an
/// independent normal prior and known-noise linear observations.
pub fn conjugate_draw(
    prior_mean: &[f64],
    prior_sd: &[f64],
    demos: &[(Vec<f64>, f64)],
    noise_sd: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<f64>> {
    let (mean, chol) = conjugate_posterior(prior_mean, prior_sd, demos, noise_sd)?;
    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    // precision = L Lᵀ, so L⁻ᵀ z has covariance precision⁻¹.
    let offset = chol.l().transpose().solve_upper_triangular(&z).expect("non-singular factor");
    Ok((mean + offset).iter().copied().collect())
}

/// Posterior mean and Cholesky factor of the posterior precision.
pub fn conjugate_posterior(
    prior_mean: &[f64],
    prior_sd: &[f64],
    demos: &[(Vec<f64>, f64)],
    noise_sd: f64,
) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let p = prior_mean.len();
    let mut precision = DMatrix::from_diagonal(&DVector::from_iterator(p, prior_sd.iter().map(|s| s.powi(-2))));
    let mut rhs = DVector::from_iterator(p, prior_mean.iter().zip(prior_sd).map(|(m, s)| m / (s * s)));
    let w = noise_sd.powi(-2);
    for (x, y) in demos {
        if x.len() + 1 != p {
            return Err(Error::Argument(format!("demo has {} features, prior covers {}", x.len(), p - 1)));
        }
        let row = DVector::from_iterator(p, x.iter().copied().chain([1.0]));
        precision += &row * row.transpose() * w;
        rhs += &row * (y * w);
    }
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Argument("posterior precision not positive definite".into()))?;
    Ok((chol.solve(&rhs), chol))
}

impl Responder for Script {
    fn respond(&self, request: &ChatRequest) -> Result<String> {
        match classify(request) {
            RequestKind::Paraphrase => self.paraphrase(request),
            RequestKind::Elicitation => self.elicit(),
            RequestKind::Prediction => self.predict(request),
            RequestKind::Completion => self.complete(request),
        }
    }
}
