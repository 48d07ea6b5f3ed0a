//! Scripted chat backend driven by a JSON rule file.
//!
//! ```json
//! {
//!   "version": 1,
//!   "model_id": "mock",
//!   "rules": [
//!     { "contains": "identifies context dimensions",
//!       "response": "[{\"name\": \"Time\", \"score\": 0.9}]" },
//!     { "pattern": "Question: Repeat the word (\\w+)",
//!       "responses": ["{\"answer\": \"$1\"}"], "score": 0.9 }
//!   ],
//!   "default_response": null,
//!   "embedding_aliases": { "no data": "i don't know" }
//! }
//! ```
//!
//! Rules are tried in order against the rendered prompt and the first match
//! wins. A rule matches when every given matcher (`contains`, `pattern`)
//! matches. `responses` are indexed by the request's sample slot modulo their
//! count, and `$1`-style references expand to `pattern` captures. `score` is
//! the per-token probability used to synthesize log-probabilities; `tokens`
//! gives them verbatim.

use std::collections::BTreeMap;
use std::path::Path;

use abca_core::{BackendError, ChatBackend, Completion, CompletionRequest, Provenance, TokenScore, Usage};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub version: u32,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_response: Option<String>,
    /// Texts that the mock embedder treats as the same string.
    #[serde(default)]
    pub embedding_aliases: BTreeMap<String, String>,
}

fn default_model_id() -> String {
    "mock".into()
}

impl MockScript {
    pub fn from_json(s: &str) -> Result<Self> {
        let script: MockScript = serde_json::from_str(s).map_err(|e| HarnessError::Script(e.to_string()))?;
        if script.version != SCRIPT_VERSION {
            return Err(HarnessError::Script(format!("unsupported version {}", script.version)));
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&s)
    }
}

struct CompiledRule {
    rule: MockRule,
    regex: Option<Regex>,
}

/// Replays a [`MockScript`]. Never touches the network.
pub struct MockBackend {
    script: MockScript,
    rules: Vec<CompiledRule>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self> {
        let mut rules = Vec::with_capacity(script.rules.len());
        for (i, rule) in script.rules.iter().enumerate() {
            if rule.contains.is_none() && rule.pattern.is_none() {
                return Err(HarnessError::Script(format!("rule {i} has no matcher")));
            }
            if rule.response.is_none() && rule.responses.is_empty() {
                return Err(HarnessError::Script(format!("rule {i} has no response")));
            }
            if let Some(p) = rule.score {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(HarnessError::Script(format!("rule {i}: score {p} outside (0, 1]")));
                }
            }
            let regex = match &rule.pattern {
                Some(p) => Some(Regex::new(p).map_err(|e| HarnessError::Script(format!("rule {i}: {e}")))?),
                None => None,
            };
            rules.push(CompiledRule { rule: rule.clone(), regex });
        }
        Ok(Self { script, rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(MockScript::load(path)?)
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn respond(&self, prompt: &str, slot: usize) -> Option<(String, Option<&MockRule>)> {
        for c in &self.rules {
            if let Some(needle) = &c.rule.contains {
                if !prompt.contains(needle.as_str()) {
                    continue;
                }
            }
            let caps = match &c.regex {
                Some(re) => match re.captures(prompt) {
                    Some(caps) => Some(caps),
                    None => continue,
                },
                None => None,
            };
            let template = if c.rule.responses.is_empty() {
                c.rule.response.clone().unwrap_or_default()
            } else {
                c.rule.responses[slot % c.rule.responses.len()].clone()
            };
            let text = match caps {
                Some(caps) => {
                    let mut out = String::new();
                    caps.expand(&template, &mut out);
                    out
                }
                None => template,
            };
            return Some((text, Some(&c.rule)));
        }
        self.script.default_response.clone().map(|t| (t, None))
    }
}

/// Splits text into alphanumeric runs and single other characters; the
/// pieces concatenate back to the input.
pub fn synthetic_tokens(text: &str, p: f64) -> Vec<TokenScore> {
    let lp = p.ln();
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(TokenScore { token: std::mem::take(&mut word), logprob: lp });
        }
        out.push(TokenScore { token: ch.to_string(), logprob: lp });
    }
    if !word.is_empty() {
        out.push(TokenScore { token: word, logprob: lp });
    }
    out
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let prompt = req.rendered_prompt();
        let slot = req.sample_slot.unwrap_or(0) as usize;
        let (text, rule) = self
            .respond(&prompt, slot)
            .ok_or_else(|| BackendError::ProviderError(format!("no-rule: {}", truncate(&prompt, 120))))?;
        let tokens = if req.want_logprobs {
            match rule {
                Some(MockRule { tokens: Some(t), .. }) => Some(t.clone()),
                Some(MockRule { score: Some(p), .. }) => Some(synthetic_tokens(&text, *p)),
                _ => return Err(BackendError::MissingLogprobs),
            }
        } else {
            None
        };
        Ok(Completion {
            usage: Usage { prompt_tokens: word_count(&prompt), completion_tokens: word_count(&text) },
            text,
            tokens,
            provenance: Provenance::Mock,
        })
    }

    fn model_id(&self) -> String {
        self.script.model_id.clone()
    }
}

fn truncate(s: &str, n: usize) -> String {
    let flat: String = s.chars().map(|c| if c == '\n' { ' ' } else { c }).collect();
    match flat.char_indices().nth(n) {
        Some((i, _)) => format!("{}...", &flat[..i]),
        None => flat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use abca_core::Message;

    fn script(rules: &str) -> MockBackend {
        let s = format!(r#"{{"version": 1, "rules": {rules}}}"#);
        MockBackend::new(MockScript::from_json(&s).unwrap()).unwrap()
    }

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new("mock", vec![Message::user(prompt)])
    }

    #[test]
    fn first_match_wins() {
        let m = script(r#"[{"contains": "b", "response": "one"}, {"contains": "a", "response": "two"}]"#);
        assert_eq!(m.complete(&req("ab")).unwrap().text, "one");
        assert_eq!(m.complete(&req("a")).unwrap().text, "two");
        let err = m.complete(&req("zzz")).unwrap_err();
        assert!(matches!(err, BackendError::ProviderError(ref s) if s.starts_with("no-rule")));
    }

    #[test]
    fn slots_and_captures() {
        let m = script(r#"[{"pattern": "word (\\w+)", "responses": ["x-$1", "y-$1"]}]"#);
        let mut r = req("the word kiwi");
        assert_eq!(m.complete(&r).unwrap().text, "x-kiwi");
        r.sample_slot = Some(3);
        assert_eq!(m.complete(&r).unwrap().text, "y-kiwi");
    }

    #[test]
    fn logprobs() {
        let m = script(r#"[{"contains": "s", "response": "{\"answer\": \"Steve Jobs\"}", "score": 0.5},
                           {"contains": "n", "response": "plain"}]"#);
        let mut r = req("s");
        r.want_logprobs = true;
        let c = m.complete(&r).unwrap();
        let toks = c.tokens.unwrap();
        assert_eq!(toks.iter().map(|t| t.token.as_str()).collect::<String>(), c.text);
        assert!(toks.iter().all(|t| (t.logprob - 0.5f64.ln()).abs() < 1e-15));
        let mut r = req("n");
        r.want_logprobs = true;
        assert_eq!(m.complete(&r).unwrap_err(), BackendError::MissingLogprobs);
        r.want_logprobs = false;
        assert!(m.complete(&r).unwrap().tokens.is_none());
    }

    #[test]
    fn rejects_bad_scripts() {
        assert!(MockScript::from_json(r#"{"version": 2, "rules": []}"#).is_err());
        assert!(MockScript::from_json(r#"{"version": 1, "rules": [], "extra": 1}"#).is_err());
        let s = MockScript::from_json(r#"{"version": 1, "rules": [{"response": "x"}]}"#).unwrap();
        assert!(MockBackend::new(s).is_err());
        let s = MockScript::from_json(r#"{"version": 1, "rules": [{"contains": "a", "response": "x", "score": 0}]}"#).unwrap();
        assert!(MockBackend::new(s).is_err());
    }
}
