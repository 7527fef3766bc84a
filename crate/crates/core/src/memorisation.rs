//! Header- and row-completion memorisation tests scored by normalised
//! Levenshtein distance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{strip_thinking, Gateway, Message};
use crate::seed;

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + (ca != cb) as usize;
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalisation {
    /// Divide by the longer length; always within [0, 1].
    #[default]
    Max,
    /// Divide by the shorter length; can exceed 1.
    Min,
}

pub fn normalized_levenshtein_with(a: &str, b: &str, norm: Normalisation) -> f64 {
    let (la, lb) = (a.chars().count(), b.chars().count());
    let denom = match norm {
        Normalisation::Max => la.max(lb),
        Normalisation::Min => la.min(lb),
    };
    let dist = levenshtein(a, b);
    if dist == 0 {
        0.0
    } else if denom == 0 {
        f64::INFINITY
    } else {
        dist as f64 / denom as f64
    }
}

/// Levenshtein distance over the longer length; 0 for two empty strings.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    normalized_levenshtein_with(a, b, Normalisation::Max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Header,
    Row,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub prompt: String,
    pub completion: String,
    pub truth: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorisationResult {
    pub test_kind: TestKind,
    pub trials: Vec<Trial>,
    pub mean: f64,
    pub std: f64,
}

impl MemorisationResult {
    fn new(test_kind: TestKind, trials: Vec<Trial>) -> Self {
        let n = trials.len().max(1) as f64;
        let mean = trials.iter().map(|t| t.distance).sum::<f64>() / n;
        let var = trials.iter().map(|t| (t.distance - mean).powi(2)).sum::<f64>() / n;
        MemorisationResult { test_kind, trials, mean, std: var.sqrt() }
    }

    pub fn distances(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.distance).collect()
    }
}

pub const COMPLETION_SYSTEM: &str = "You are an autocomplete engine for CSV files. Continue the text exactly where it stops, reproducing the original file as faithfully as you can. Output only the continuation.";
pub const ROW_PROMPT_HEAD: &str = "Consecutive rows of a CSV file:\n";
pub const ROW_PROMPT_TAIL: &str = "\nWrite the row that comes next.";

fn lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.trim().is_empty()).collect()
}

fn prefix_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Split the file after the header and `n_seed_rows` rows, cutting the last
/// seed row at its middle character. Returns (prompt, true continuation).
pub fn header_split(dataset_text: &str, n_seed_rows: usize) -> Result<(String, String)> {
    let all = lines(dataset_text);
    if n_seed_rows == 0 || all.len() < n_seed_rows + 2 {
        return Err(Error::Argument(format!(
            "header test needs a header, {n_seed_rows} seed rows and one more row; file has {} lines",
            all.len()
        )));
    }
    let full = all.join("\n");
    let last = all[n_seed_rows];
    let mid = last.chars().count() / 2;
    let kept: usize = all[..n_seed_rows].iter().map(|l| l.len() + 1).sum::<usize>() + prefix_chars(last, mid).len();
    Ok((full[..kept].to_string(), full[kept..].to_string()))
}

/// Ask for the continuation of the file's opening and score it against the
/// true continuation cut to the completion's length.
pub fn header_test(
    llm: &Gateway,
    dataset_text: &str,
    n_seed_rows: usize,
    completion_tokens: u32,
    norm: Normalisation,
) -> Result<MemorisationResult> {
    let (prompt, truth) = header_split(dataset_text, n_seed_rows)?;
    let request = llm
        .request(vec![Message::system(COMPLETION_SYSTEM), Message::user(prompt.clone())])
        .with_max_tokens(Some(completion_tokens));
    let completion = strip_thinking(&llm.complete(&request)?);
    let truth = prefix_chars(&truth, completion.chars().count()).to_string();
    let distance = normalized_levenshtein_with(&completion, &truth, norm);
    Ok(MemorisationResult::new(TestKind::Header, vec![Trial { prompt, completion, truth, distance }]))
}

pub fn row_prompt(context: &[&str]) -> String {
    format!("{ROW_PROMPT_HEAD}{}{ROW_PROMPT_TAIL}", context.join("\n"))
}

/// Show `context_rows` consecutive data rows from a random start and score
/// the first line of the reply against the row that follows.
pub fn row_test(
    llm: &Gateway,
    dataset_text: &str,
    n_trials: usize,
    context_rows: usize,
    seed: u64,
    norm: Normalisation,
) -> Result<MemorisationResult> {
    let all = lines(dataset_text);
    let rows = all.get(1..).unwrap_or_default();
    if context_rows == 0 || rows.len() < context_rows + 1 {
        return Err(Error::Argument(format!(
            "row test needs {} data rows, file has {}",
            context_rows + 1,
            rows.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let trials = (0..n_trials)
        .map(|_| {
            let start = rng.random_range(0..=rows.len() - context_rows - 1);
            let prompt = row_prompt(&rows[start..start + context_rows]);
            let request = llm.request(vec![Message::system(COMPLETION_SYSTEM), Message::user(prompt.clone())]);
            let reply = llm.complete(&request)?;
            let completion = lines(&strip_thinking(&reply)).first().map_or("", |l| l.trim()).to_string();
            let truth = rows[start + context_rows].trim().to_string();
            let distance = normalized_levenshtein_with(&completion, &truth, norm);
            Ok(Trial { prompt, completion, truth, distance })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MemorisationResult::new(TestKind::Row, trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, proptest, prop_assert, prop_assert_eq};
    use std::collections::HashMap;

    /// Memoised textbook recursion, independent of the two-row table.
    fn oracle(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&v) = memo.get(&(a.len(), b.len())) {
            return v;
        }
        let cost = (a[0] != b[0]) as usize;
        let v = (oracle(&a[1..], &b[1..], memo) + cost)
            .min(oracle(&a[1..], b, memo) + 1)
            .min(oracle(a, &b[1..], memo) + 1);
        memo.insert((a.len(), b.len()), v);
        v
    }

    fn dist(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        oracle(&a, &b, &mut HashMap::new())
    }

    #[test]
    fn textbook_examples() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("same", "same"), 0);
        assert!((normalized_levenshtein("kitten", "sitting") - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(normalized_levenshtein("abcd", "wxyz"), 1.0);
        assert_eq!(normalized_levenshtein("", ""), 0.0);
        assert_eq!(normalized_levenshtein("x", "x"), 0.0);
        assert!((normalized_levenshtein_with("ab", "abcd", Normalisation::Min) - 1.0).abs() < 1e-15);
        assert!(normalized_levenshtein_with("a", "abcd", Normalisation::Min) > 1.0);
    }

    proptest! {
        #[test]
        fn matches_the_recursive_oracle(a in "[abc]{0,12}", b in "[abc]{0,12}") {
            prop_assert_eq!(levenshtein(&a, &b), dist(&a, &b));
        }

        #[test]
        fn symmetric_and_triangular(a in "[ab]{0,10}", b in "[ab]{0,10}", c in "[ab]{0,10}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn normalised_within_unit_interval(a in any::<String>(), b in any::<String>()) {
            let v = normalized_levenshtein(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    const FILE: &str = "a,b,target\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n";

    #[test]
    fn header_split_cuts_the_last_seed_row() {
        let (prompt, truth) = header_split(FILE, 2).unwrap();
        assert_eq!(prompt, "a,b,target\n1,2,3\n4,");
        assert_eq!(truth, "5,6\n7,8,9\n10,11,12");
        assert!(header_split(FILE, 4).is_err());
    }

    #[test]
    fn header_echo_scores_zero_and_garbage_scores_high() {
        let echo = Gateway::mock(|r: &crate::gateway::ChatRequest| {
            Ok(FILE.strip_prefix(r.user_text().as_str()).unwrap()[..6].to_string())
        });
        let res = header_test(&echo, FILE, 2, 500, Normalisation::Max).unwrap();
        assert_eq!(res.mean, 0.0);
        assert_eq!(res.trials[0].truth, "5,6\n7,");
        let garbage = Gateway::mock(|_: &crate::gateway::ChatRequest| Ok("zzzzzzzz".to_string()));
        assert_eq!(header_test(&garbage, FILE, 2, 500, Normalisation::Max).unwrap().mean, 1.0);
    }

    #[test]
    fn row_trials_and_validation() {
        let echo = Gateway::mock(|r: &crate::gateway::ChatRequest| {
            let text = r.user_text();
            let block = text.strip_prefix(ROW_PROMPT_HEAD).unwrap().strip_suffix(ROW_PROMPT_TAIL).unwrap();
            let all: Vec<&str> = FILE.lines().collect();
            let last = block.lines().last().unwrap();
            let i = all.iter().position(|l| *l == last).unwrap();
            Ok(format!("{}\n", all[i + 1]))
        });
        let res = row_test(&echo, FILE, 25, 2, 3, Normalisation::Max).unwrap();
        assert_eq!(res.trials.len(), 25);
        assert_eq!((res.mean, res.std), (0.0, 0.0));
        assert!(row_test(&echo, FILE, 5, 4, 3, Normalisation::Max).is_err());
    }
}
