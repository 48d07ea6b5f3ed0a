//! Prompt templates.
//!
//! The eleven agent prompts are stored as text assets under `templates/` and
//! compiled in. Placeholders are `{identifier}`; literal braces in the JSON
//! examples never form a placeholder because they are not followed by an
//! identifier and a closing brace.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Appended as a follow-up turn when an agent reply could not be parsed.
pub const RETRY_INSTRUCTION: &str =
    "Your previous reply could not be parsed. Return ONLY the JSON in the requested format, with no other text.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    DagentIdentify,
    CagentIdentify,
    DagentGenerate,
    CagentGenerate,
    DagentWeights,
    CagentWeights,
    Cot,
    Answer,
    AbstainConflict,
    AbstainInsufficient,
    Aggregate,
    /// Single-shot answer used when discovery fails.
    DirectAnswer,
    /// Correctness grading in `llm_judge` mode.
    Judge,
    /// Confidence elicitation for providers without log-probabilities.
    SelfRating,
}

impl TemplateId {
    /// The eleven pipeline prompts, in pipeline order.
    pub const AGENT_PROMPTS: [TemplateId; 11] = [
        TemplateId::DagentIdentify,
        TemplateId::CagentIdentify,
        TemplateId::DagentGenerate,
        TemplateId::CagentGenerate,
        TemplateId::DagentWeights,
        TemplateId::CagentWeights,
        TemplateId::Cot,
        TemplateId::Answer,
        TemplateId::AbstainConflict,
        TemplateId::AbstainInsufficient,
        TemplateId::Aggregate,
    ];

    pub const ALL: [TemplateId; 14] = [
        TemplateId::DagentIdentify,
        TemplateId::CagentIdentify,
        TemplateId::DagentGenerate,
        TemplateId::CagentGenerate,
        TemplateId::DagentWeights,
        TemplateId::CagentWeights,
        TemplateId::Cot,
        TemplateId::Answer,
        TemplateId::AbstainConflict,
        TemplateId::AbstainInsufficient,
        TemplateId::Aggregate,
        TemplateId::DirectAnswer,
        TemplateId::Judge,
        TemplateId::SelfRating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::DagentIdentify => "dagent_identify",
            TemplateId::CagentIdentify => "cagent_identify",
            TemplateId::DagentGenerate => "dagent_generate",
            TemplateId::CagentGenerate => "cagent_generate",
            TemplateId::DagentWeights => "dagent_weights",
            TemplateId::CagentWeights => "cagent_weights",
            TemplateId::Cot => "cot",
            TemplateId::Answer => "answer",
            TemplateId::AbstainConflict => "abstain_conflict",
            TemplateId::AbstainInsufficient => "abstain_insufficient",
            TemplateId::Aggregate => "aggregate",
            TemplateId::DirectAnswer => "direct_answer",
            TemplateId::Judge => "judge",
            TemplateId::SelfRating => "self_rating",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::UnknownTemplate(name.to_string()))
    }

    pub fn text(self) -> &'static str {
        match self {
            TemplateId::DagentIdentify => include_str!("../templates/dagent_identify.txt"),
            TemplateId::CagentIdentify => include_str!("../templates/cagent_identify.txt"),
            TemplateId::DagentGenerate => include_str!("../templates/dagent_generate.txt"),
            TemplateId::CagentGenerate => include_str!("../templates/cagent_generate.txt"),
            TemplateId::DagentWeights => include_str!("../templates/dagent_weights.txt"),
            TemplateId::CagentWeights => include_str!("../templates/cagent_weights.txt"),
            TemplateId::Cot => include_str!("../templates/cot.txt"),
            TemplateId::Answer => include_str!("../templates/answer.txt"),
            TemplateId::AbstainConflict => include_str!("../templates/abstain_conflict.txt"),
            TemplateId::AbstainInsufficient => include_str!("../templates/abstain_insufficient.txt"),
            TemplateId::Aggregate => include_str!("../templates/aggregate.txt"),
            TemplateId::DirectAnswer => include_str!("../templates/direct_answer.txt"),
            TemplateId::Judge => include_str!("../templates/judge.txt"),
            TemplateId::SelfRating => include_str!("../templates/self_rating.txt"),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = Vec::new();
        for seg in segments(self.text()) {
            if let Segment::Placeholder(name) = seg {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn placeholder_at(s: &str) -> Option<usize> {
    // s starts with '{'; returns the byte length of the identifier if `{ident}` follows
    let rest = &s[1..];
    let len = rest
        .char_indices()
        .take_while(|&(i, c)| c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit()))
        .count();
    (len > 0 && rest[len..].starts_with('}')).then_some(len)
}

fn segments(text: &str) -> impl Iterator<Item = Segment<'_>> {
    let mut rest = text;
    core::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        let mut search = 0;
        while let Some(rel) = rest[search..].find('{') {
            let at = search + rel;
            if let Some(len) = placeholder_at(&rest[at..]) {
                if at > 0 {
                    let lit = &rest[..at];
                    rest = &rest[at..];
                    return Some(Segment::Literal(lit));
                }
                let name = &rest[1..=len];
                rest = &rest[len + 2..];
                return Some(Segment::Placeholder(name));
            }
            search = at + 1;
        }
        let lit = rest;
        rest = "";
        Some(Segment::Literal(lit))
    })
}

/// Returns true when `text` still contains an `{identifier}` placeholder.
pub fn has_placeholder(text: &str) -> bool {
    segments(text).any(|s| matches!(s, Segment::Placeholder(_)))
}

/// Substitutes every placeholder of `id` from `bindings` in a single pass, so
/// bound values are never themselves scanned for placeholders.
pub fn render_prompt(id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<String> {
    let text = id.text();
    let mut out = String::with_capacity(text.len() + 256);
    for seg in segments(text) {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Placeholder(name) => {
                let value = bindings.get(name).ok_or_else(|| Error::MissingBinding(name.to_string()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

/// [`render_prompt`] looked up by template name.
pub fn render_named(name: &str, bindings: &BTreeMap<String, String>) -> Result<String> {
    render_prompt(TemplateId::from_name(name)?, bindings)
}

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
