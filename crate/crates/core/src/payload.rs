//! Extraction and validation of the JSON payloads agents are asked to return.
//!
//! Replies often wrap the JSON in prose or code fences, and sometimes copy the
//! single-quoted style of the prompt examples. [`extract_json`] finds the first
//! well-formed value under those conditions; the `parse_*` functions then check
//! it against the expected shape.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Deserialize;
use serde_json::Value;

use crate::discovery::{AspectCandidate, Dimension};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Dimensions,
    Aspects,
    Weights,
    Cot,
    Answer,
    Final,
    Judge,
    Confidence,
}

/// An aspect weight as proposed by one agent.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct AspectWeight {
    pub value: String,
    pub weight: f64,
    #[serde(default)]
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dimensions(Vec<Dimension>),
    Aspects(Vec<AspectCandidate>),
    Weights(Vec<AspectWeight>),
    Cot(String),
    Answer(String),
    Final(String),
    Judge(bool),
    Confidence(f64),
}

pub fn parse_agent_payload(raw: &str, expected: PayloadKind) -> Result<Payload> {
    Ok(match expected {
        PayloadKind::Dimensions => Payload::Dimensions(parse_dimensions(raw)?),
        PayloadKind::Aspects => Payload::Aspects(parse_aspects(raw)?),
        PayloadKind::Weights => Payload::Weights(parse_weights(raw)?),
        PayloadKind::Cot => Payload::Cot(parse_text_field(raw, &["CoT", "cot", "chain_of_thought"])?),
        PayloadKind::Answer => Payload::Answer(parse_text_field(raw, &["answer"])?),
        PayloadKind::Final => Payload::Final(parse_text_field(raw, &["final_answer"])?),
        PayloadKind::Judge => Payload::Judge(parse_judge(raw)?),
        PayloadKind::Confidence => Payload::Confidence(parse_confidence(raw)?),
    })
}

/// Finds the first well-formed JSON value in `raw`.
pub fn extract_json(raw: &str) -> Result<Value> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Ok(v);
    }
    for block in fenced_blocks(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(block.trim()) {
            return Ok(v);
        }
    }
    if let Some(v) = first_embedded_value(raw) {
        return Ok(v);
    }
    let relaxed = requote_single_quotes(raw);
    if relaxed != raw {
        if let Ok(v) = serde_json::from_str::<Value>(relaxed.trim()) {
            return Ok(v);
        }
        if let Some(v) = first_embedded_value(&relaxed) {
            return Ok(v);
        }
    }
    Err(Error::MalformedPayload(snippet(raw)))
}

fn snippet(raw: &str) -> String {
    let mut s: String = raw.chars().take(120).collect();
    if raw.chars().count() > 120 {
        s.push_str("...");
    }
    s
}

fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip an info string such as `json`
        let body_start = after.find('\n').map_or(0, |n| n + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    out
}

fn first_embedded_value(raw: &str) -> Option<Value> {
    for (i, c) in raw.char_indices() {
        if c == '[' || c == '{' {
            let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                if v.is_array() || v.is_object() {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Rewrites Python-style single-quoted strings as JSON strings. An apostrophe
/// only closes a string when the next non-space character is a delimiter, so
/// contractions inside values survive.
fn requote_single_quotes(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    let mut in_double = false;
    while i < chars.len() {
        let c = chars[i];
        if in_double {
            out.push(c);
            if c == '\\' && i + 1 < chars.len() {
                out.push(chars[i + 1]);
                i += 1;
            } else if c == '"' {
                in_double = false;
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_double = true;
                out.push(c);
            }
            '\'' | '`' | '‘' | '’' => {
                let opener_ok = out.trim_end().ends_with(['{', '[', ',', ':']);
                if !opener_ok {
                    out.push(c);
                    i += 1;
                    continue;
                }
                out.push('"');
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    if matches!(d, '\'' | '’') {
                        let next = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
                        if next.is_none_or(|n| matches!(n, ',' | ':' | '}' | ']')) {
                            break;
                        }
                    }
                    match d {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        _ => out.push(d),
                    }
                    i += 1;
                }
                out.push('"');
            }
            _ => out.push(c),
        }
        i += 1;
    }
    out
}

fn schema(msg: impl Into<String>) -> Error {
    Error::SchemaViolation(msg.into())
}

/// Unwraps `{"dimensions": [...]}`-style wrappers and single bare objects.
fn as_list(v: Value) -> Result<Vec<Value>> {
    match v {
        Value::Array(items) => Ok(items),
        Value::Object(map) => {
            let arrays: Vec<&Value> = map.values().filter(|v| v.is_array()).collect();
            if arrays.len() == 1 {
                Ok(arrays[0].as_array().cloned().unwrap_or_default())
            } else if arrays.is_empty() {
                Ok(alloc::vec![Value::Object(map)])
            } else {
                Err(schema("expected a list of records"))
            }
        }
        _ => Err(schema("expected a list of records")),
    }
}

fn records<T: for<'de> Deserialize<'de>>(raw: &str) -> Result<Vec<T>> {
    let items = as_list(extract_json(raw)?)?;
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| serde_json::from_value::<T>(item).map_err(|e| schema(format!("record {i}: {e}"))))
        .collect()
}

#[derive(Deserialize)]
struct RawDimension {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    justification: String,
    score: f64,
}

pub fn parse_dimensions(raw: &str) -> Result<Vec<Dimension>> {
    records::<RawDimension>(raw)?
        .into_iter()
        .map(|d| {
            if d.name.trim().is_empty() {
                return Err(schema("dimension name is empty"));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(schema(format!("dimension score {} outside [0, 1]", d.score)));
            }
            Ok(Dimension {
                name: d.name.trim().to_owned(),
                description: d.description,
                justification: d.justification,
                score: d.score,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct RawAspect {
    value: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    justification: String,
}

pub fn parse_aspects(raw: &str) -> Result<Vec<AspectCandidate>> {
    records::<RawAspect>(raw)?
        .into_iter()
        .map(|a| {
            if a.value.trim().is_empty() {
                return Err(schema("aspect value is empty"));
            }
            Ok(AspectCandidate {
                value: a.value.trim().to_owned(),
                description: a.description,
                justification: a.justification,
            })
        })
        .collect()
}

pub fn parse_weights(raw: &str) -> Result<Vec<AspectWeight>> {
    let ws = records::<AspectWeight>(raw)?;
    for w in &ws {
        if !(0.0..=1.0).contains(&w.weight) {
            return Err(schema(format!("weight {} for {:?} outside [0, 1]", w.weight, w.value)));
        }
    }
    if ws.is_empty() {
        return Err(schema("no weights"));
    }
    Ok(ws)
}

fn field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a Value> {
    let map = v.as_object()?;
    keys.iter().find_map(|k| map.get(*k)).or_else(|| {
        map.iter()
            .find(|(name, _)| keys.iter().any(|k| name.eq_ignore_ascii_case(k)))
            .map(|(_, v)| v)
    })
}

fn parse_text_field(raw: &str, keys: &[&str]) -> Result<String> {
    let v = extract_json(raw)?;
    let v = match v {
        Value::Array(mut items) if items.len() == 1 => items.remove(0),
        other => other,
    };
    match field(&v, keys) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_owned()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(Value::Bool(b)) => Ok(b.to_string()),
        Some(Value::String(_)) => Err(schema(format!("field {:?} is empty", keys[0]))),
        Some(_) => Err(schema(format!("field {:?} is not a string", keys[0]))),
        None => Err(schema(format!("missing field {:?}", keys[0]))),
    }
}

fn parse_judge(raw: &str) -> Result<bool> {
    let v = extract_json(raw)?;
    match field(&v, &["correct"]) {
        Some(Value::Bool(b)) => Ok(*b),
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => Ok(true),
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => Ok(false),
        Some(_) => Err(schema("field \"correct\" is not a boolean")),
        None => Err(schema("missing field \"correct\"")),
    }
}

fn parse_confidence(raw: &str) -> Result<f64> {
    let v = extract_json(raw)?;
    let c = match field(&v, &["confidence"]) {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .ok_or_else(|| schema("missing numeric field \"confidence\""))?;
    if !(0.0..=1.0).contains(&c) {
        return Err(schema(format!("confidence {c} outside [0, 1]")));
    }
    Ok(c)
}
