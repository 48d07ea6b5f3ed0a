//! JSONL benchmark datasets: one [`DatasetRecord`] per line.

use std::fmt::Write as _;
use std::path::Path;

use abca_core::{AnswerMode, DatasetRecord};
use serde_json::Value;

use crate::error::{HarnessError, Result};

const REQUIRED: [&str; 3] = ["id", "question", "answerable"];

/// Parses a dataset. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw)
            .map_err(|e| HarnessError::MalformedRecord { line, reason: e.to_string() })?;
        let Some(obj) = v.as_object() else {
            return Err(HarnessError::MalformedRecord { line, reason: "not a JSON object".into() });
        };
        if let Some(f) = REQUIRED.iter().find(|f| !obj.contains_key(**f)) {
            return Err(HarnessError::MissingField { line, field: f.to_string() });
        }
        let rec: DatasetRecord =
            serde_json::from_value(v).map_err(|e| HarnessError::MalformedRecord { line, reason: e.to_string() })?;
        if rec.answerable && rec.gold_answers.is_empty() {
            return Err(HarnessError::MissingField { line, field: "gold_answers".into() });
        }
        if rec.answer_mode == AnswerMode::Categorical && rec.options.is_none() {
            return Err(HarnessError::MissingField { line, field: "options".into() });
        }
        rec.to_question().map_err(|e| HarnessError::MalformedRecord { line, reason: e.to_string() })?;
        if !seen.insert(rec.id.clone()) {
            return Err(HarnessError::MalformedRecord { line, reason: format!("duplicate id {}", rec.id) });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_dataset(&s)
}

pub fn dataset_to_jsonl(records: &[DatasetRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?).expect("writing to a String");
    }
    Ok(out)
}

pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_jsonl(records)?).map_err(|e| HarnessError::io(path, e))
}
