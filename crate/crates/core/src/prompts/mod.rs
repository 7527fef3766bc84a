//! Task descriptions: base role templates, LLM paraphrase expansion, the
//! system x user product, and placeholder filling.

mod assets;
pub mod presets;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{strip_thinking, Gateway, Message};

pub use assets::{builtin_roles, load_roles, save_roles, BUILTIN_SETS, PARAPHRASE_INSTRUCTION};

pub const FEATURE_NAMES: &str = "feature_names";
pub const TARGET_NAME: &str = "target_name";
pub const EXPERT_INFO: &str = "expert_info";
const KNOWN_PLACEHOLDERS: [&str; 3] = [FEATURE_NAMES, TARGET_NAME, EXPERT_INFO];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleKind {
    System,
    User,
}

impl RoleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleKind::System => "system",
            RoleKind::User => "user",
        }
    }
}

/// A role template with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleText {
    pub kind: RoleKind,
    pub template: String,
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"))
}

/// Placeholder names appearing in `text`.
pub fn placeholders(text: &str) -> BTreeSet<String> {
    placeholder_regex()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

impl RoleText {
    pub fn new(kind: RoleKind, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.trim().is_empty() {
            return Err(Error::Template(format!("{} role template is empty", kind.as_str())));
        }
        if let Some(bad) = placeholders(&template)
            .into_iter()
            .find(|p| !KNOWN_PLACEHOLDERS.contains(&p.as_str()))
        {
            return Err(Error::Template(format!("unknown placeholder {{{bad}}}")));
        }
        Ok(RoleText { kind, template })
    }

    pub fn system(template: impl Into<String>) -> Result<Self> {
        Self::new(RoleKind::System, template)
    }

    pub fn user(template: impl Into<String>) -> Result<Self> {
        Self::new(RoleKind::User, template)
    }
}

/// Paraphrase `base` into `n_variants` role texts. Index 0 is `base` itself;
/// the rest come from the model and must keep exactly the base placeholders.
pub fn expand_role(
    base: &RoleText,
    n_variants: usize,
    llm: &Gateway,
    retries: usize,
) -> Result<Vec<RoleText>> {
    if n_variants == 0 {
        return Err(Error::Argument("n_variants must be >= 1".into()));
    }
    let wanted = placeholders(&base.template);
    let paraphrases: Vec<RoleText> = (1..n_variants)
        .into_par_iter()
        .map(|i| {
            let request = llm.request(vec![
                Message::system(PARAPHRASE_INSTRUCTION),
                Message::user(format!("Rephrasing {i}:\n{}", base.template)),
            ]);
            let reminder = "Keep every placeholder in curly braces exactly as it appears in the original.";
            let outcome = llm.ask(&request, retries, reminder, |raw| {
                let text = strip_thinking(raw).trim().to_string();
                if text.is_empty() {
                    return Err("empty paraphrase".to_string());
                }
                let got = placeholders(&text);
                if got != wanted {
                    return Err(format!(
                        "placeholders {:?} do not match the original {:?}",
                        got, wanted
                    ));
                }
                RoleText::new(base.kind, text).map_err(|e| e.to_string())
            })?;
            outcome.map_err(|r| {
                Error::Expansion(format!(
                    "paraphrase {i} of the {} role rejected after {} attempts: {}",
                    base.kind.as_str(),
                    r.attempts,
                    r.reason
                ))
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n_variants);
    out.push(base.clone());
    out.extend(paraphrases);
    Ok(out)
}

/// An unresolved (system, user) pairing with its variant indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionTemplate {
    pub system: RoleText,
    pub user: RoleText,
    pub origin: (usize, usize),
}

/// Every system variant paired with every user variant, row-major.
pub fn cartesian(systems: &[RoleText], users: &[RoleText]) -> Result<Vec<DescriptionTemplate>> {
    if systems.is_empty() || users.is_empty() {
        return Err(Error::Argument("cartesian product needs non-empty role lists".into()));
    }
    Ok(systems
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            users.iter().enumerate().map(move |(j, u)| DescriptionTemplate {
                system: s.clone(),
                user: u.clone(),
                origin: (i, j),
            })
        })
        .collect())
}

/// A fully resolved task description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub system: String,
    pub user: String,
    pub origin: (usize, usize),
}

/// Python-style list rendering: `['a', 'b']`.
pub fn render_feature_list(names: &[String]) -> String {
    let quoted: Vec<String> = names
        .iter()
        .map(|n| format!("'{}'", n.replace('\'', "\\'")))
        .collect();
    format!("[{}]", quoted.join(", "))
}

fn substitute(text: &str, features: &str, target: &str, expert: &str) -> Result<String> {
    let mut unknown = None;
    let out = placeholder_regex().replace_all(text, |c: &regex::Captures| match &c[1] {
        FEATURE_NAMES => features.to_string(),
        TARGET_NAME => target.to_string(),
        EXPERT_INFO => expert.to_string(),
        other => {
            unknown.get_or_insert_with(|| other.to_string());
            String::new()
        }
    });
    if let Some(p) = unknown {
        return Err(Error::Template(format!("unknown placeholder {{{p}}}")));
    }
    // an empty expert slot leaves doubled spaces behind
    let collapsed = out
        .split('\n')
        .map(|line| line.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(collapsed)
}

/// Resolve every placeholder. Expert information without an `{expert_info}`
/// slot in the user role is appended to it.
pub fn fill(
    template: &DescriptionTemplate,
    feature_names: &[String],
    target_name: &str,
    expert_info: Option<&str>,
) -> Result<TaskDescription> {
    let features = render_feature_list(feature_names);
    let expert = expert_info.unwrap_or("").trim();
    let system = substitute(&template.system.template, &features, target_name, expert)?;
    let mut user = substitute(&template.user.template, &features, target_name, expert)?;
    if !expert.is_empty() && !placeholders(&template.user.template).contains(EXPERT_INFO) {
        user.push('\n');
        user.push_str(expert);
    }
    for name in feature_names {
        if !system.contains(name.as_str()) && !user.contains(name.as_str()) {
            return Err(Error::Template(format!(
                "resolved description never mentions feature `{name}`"
            )));
        }
    }
    Ok(TaskDescription {
        system,
        user,
        origin: template.origin,
    })
}

/// Expand, pair and fill: the first `k` descriptions of the product.
#[allow(clippy::too_many_arguments)]
pub fn build_descriptions(
    base_system: &RoleText,
    base_user: &RoleText,
    n_system: usize,
    n_user: usize,
    k: usize,
    llm: &Gateway,
    feature_names: &[String],
    target_name: &str,
    expert_info: Option<&str>,
    retries: usize,
) -> Result<Vec<TaskDescription>> {
    let systems = expand_role(base_system, n_system, llm, retries)?;
    let users = expand_role(base_user, n_user, llm, retries)?;
    describe(&systems, &users, k, feature_names, target_name, expert_info)
}

/// Pair and fill already expanded roles, keeping the first `k` descriptions.
pub fn describe(
    systems: &[RoleText],
    users: &[RoleText],
    k: usize,
    feature_names: &[String],
    target_name: &str,
    expert_info: Option<&str>,
) -> Result<Vec<TaskDescription>> {
    let product = cartesian(systems, users)?;
    if k == 0 || k > product.len() {
        return Err(Error::Configuration(format!(
            "requested {k} descriptions but only {} are available",
            product.len()
        )));
    }
    product
        .iter()
        .take(k)
        .map(|t| fill(t, feature_names, target_name, expert_info))
        .collect()
}
