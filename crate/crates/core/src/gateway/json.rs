//! Pulling a JSON object out of free-form model replies.

use regex::Regex;
use serde_json::{Map, Value};
use std::sync::OnceLock;

/// Remove `<think>...</think>` sections emitted by reasoning models. An
/// unterminated opening tag swallows the rest of the reply.
pub fn strip_thinking(reply: &str) -> String {
    static THINK: OnceLock<Regex> = OnceLock::new();
    let re = THINK.get_or_init(|| Regex::new(r"(?s)<think>.*?(</think>|$)").expect("valid regex"));
    re.replace_all(reply, "").into_owned()
}

/// Candidate `{...}` spans with balanced braces (string literals respected),
/// longest first.
fn balanced_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for start in 0..bytes.len() {
        if bytes[start] != b'{' {
            continue;
        }
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push(&text[start..start + off + 1]);
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans.sort_by_key(|s| std::cmp::Reverse(s.len()));
    spans
}

/// Parse the longest balanced-brace substring as a JSON object, falling back
/// to shorter spans when it is not valid JSON.
pub fn extract_json_object(reply: &str) -> Option<Map<String, Value>> {
    let cleaned = strip_thinking(reply);
    balanced_spans(&cleaned)
        .into_iter()
        .find_map(|span| match serde_json::from_str::<Value>(span) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BODY: &str = r#"{"a": {"mean": 0, "std": 1}}"#;

    #[test]
    fn bare_object() {
        let m = extract_json_object(BODY).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m["a"]["std"], 1);
    }

    #[test]
    fn handmade_wrappers() {
        let wrappers = [
            "```json\n{}\n```",
            "```\n{}\n```",
            "```JSON\n{}```",
            "Here is the JSON:\n```json\n{}\n```\nLet me know!",
            "Sure! {}",
            "{} Hope this helps.",
            "<think>the prior should be {\"x\": 1}</think>{}",
            "<think>\nreasoning\n</think>\n\n```json\n{}\n```",
            "   {}   ",
            "\n\n{}\n",
            "Answer: `{}`",
            "The priors are as follows {} based on domain knowledge.",
            "```json\n{}\n```\n```python\nprint('x')\n```",
            "Note: braces in text like } are ignored. {}",
            "JSON output:\r\n{}\r\n",
            "> {}",
            "{}\n\nExplanation: feature 'a' has {no} effect.",
            "```json\n\n\n{}\n\n```",
            "Response:\n\t{}",
            "I think {\"partial\": } is wrong, the answer is {}",
        ];
        assert_eq!(wrappers.len(), 20);
        for w in wrappers {
            let text = w.replace("{}", BODY);
            let m = extract_json_object(&text).unwrap_or_else(|| panic!("failed on {w:?}"));
            assert_eq!(m.len(), 1, "wrapper {w:?}");
            assert_eq!(m["a"]["mean"], 0, "wrapper {w:?}");
        }
    }

    #[test]
    fn braces_inside_strings() {
        let m = extract_json_object(r#"{"note": "a } b {", "v": 2}"#).unwrap();
        assert_eq!(m["v"], 2);
    }

    #[test]
    fn prose_only() {
        assert!(extract_json_object("I cannot help").is_none());
        assert!(extract_json_object("<think>{\"a\": 1}</think> no json here").is_none());
        assert!(extract_json_object("[1, 2, 3]").is_none());
    }
}
