//! Answer judging, the answerable/unanswerable confusion matrix and the
//! abstention metrics derived from it.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, Message};
use crate::chat::{agent_request, ask_json};
use crate::config::{AbcaConfig, JudgeMode};
use crate::error::{Error, Result};
use crate::payload::{parse_agent_payload, Payload, PayloadKind};
use crate::question::DatasetRecord;
use crate::templates::{bindings, render_prompt, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    TP,
    FP,
    FN,
    TN,
}

/// Maps one response to its confusion cell.
///
/// | | answerable | unanswerable |
/// |---|---|---|
/// | answered, correct | TP | FP |
/// | answered, incorrect | FP | FP |
/// | abstained | FN | TN |
pub fn classify(abstained: bool, correct: Option<bool>, answerable: bool) -> Result<Cell> {
    match (abstained, correct) {
        (true, Some(_)) => Err(Error::ClassificationError("abstention carries a correctness flag".into())),
        (false, None) => Err(Error::ClassificationError("answer without a correctness flag".into())),
        (true, None) => Ok(if answerable { Cell::FN } else { Cell::TN }),
        (false, Some(true)) if answerable => Ok(Cell::TP),
        (false, Some(_)) => Ok(Cell::FP),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub n_answerable: u64,
    pub n_unanswerable: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64, n_answerable: u64, n_unanswerable: u64) -> Result<Self> {
        let cm = Self { tp, fp, fn_, tn, n_answerable, n_unanswerable };
        cm.validate()?;
        Ok(cm)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ClassificationError(m.into()));
        if self.tp + self.fn_ > self.n_answerable {
            return bad("tp + fn exceeds the answerable count");
        }
        if self.tn > self.n_unanswerable {
            return bad("tn exceeds the unanswerable count");
        }
        if self.tp + self.fp + self.fn_ + self.tn != self.n_answerable + self.n_unanswerable {
            return bad("cells do not add up to the record count");
        }
        Ok(())
    }

    pub fn record(&mut self, cell: Cell, answerable: bool) {
        match cell {
            Cell::TP => self.tp += 1,
            Cell::FP => self.fp += 1,
            Cell::FN => self.fn_ += 1,
            Cell::TN => self.tn += 1,
        }
        if answerable {
            self.n_answerable += 1;
        } else {
            self.n_unanswerable += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.n_answerable + self.n_unanswerable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub a_ac: f64,
    pub u_ac: f64,
    pub a_f1: f64,
    pub u_f1: f64,
    pub p_a: f64,
    pub r_a: f64,
    pub p_u: f64,
    pub r_u: f64,
    pub matrix: ConfusionMatrix,
    pub type1_abstentions: u64,
    pub type2_abstentions: u64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

impl MetricsReport {
    pub fn with_abstentions(mut self, type1: u64, type2: u64) -> Self {
        self.type1_abstentions = type1;
        self.type2_abstentions = type2;
        self
    }

    /// Percentages of Type-1 and Type-2 among all typed abstentions.
    pub fn abstention_split(&self) -> Option<(f64, f64)> {
        let total = self.type1_abstentions + self.type2_abstentions;
        (total > 0).then(|| {
            let t1 = 100.0 * self.type1_abstentions as f64 / total as f64;
            (t1, 100.0 - t1)
        })
    }
}

fn ratio(num: u64, den: u64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if p + r == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        2.0 * (p * r) / (p + r)
    }
}

/// All nine abstention metrics. A 0/0 ratio is reported as 0 and named in
/// `degenerate`.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let mut flags = Vec::new();
    let ConfusionMatrix { tp, fp, fn_, tn, n_answerable, n_unanswerable } = *cm;
    let acc = ratio(tp + tn, tp + fp + fn_ + tn, "acc", &mut flags);
    let a_ac = ratio(tp, n_answerable, "a_ac", &mut flags);
    let u_ac = ratio(tn, n_unanswerable, "u_ac", &mut flags);
    let p_a = ratio(tp, tp + fp, "p_a", &mut flags);
    let r_a = ratio(tp, tp + fn_, "r_a", &mut flags);
    let p_u = ratio(tn, tn + fn_, "p_u", &mut flags);
    let r_u = ratio(tn, tn + fp, "r_u", &mut flags);
    let a_f1 = f1(p_a, r_a, "a_f1", &mut flags);
    let u_f1 = f1(p_u, r_u, "u_f1", &mut flags);
    MetricsReport {
        acc,
        a_ac,
        u_ac,
        a_f1,
        u_f1,
        p_a,
        r_a,
        p_u,
        r_u,
        matrix: *cm,
        type1_abstentions: 0,
        type2_abstentions: 0,
        degenerate: flags,
    }
}

/// Lowercases, turns punctuation into spaces and collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let mapped: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .flat_map(|c| c.to_lowercase())
        .filter(|c| *c != '\'')
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when a normalised gold answer occurs as a whole-word span of the
/// normalised prediction, or the other way round.
pub fn string_match(prediction: &str, gold_answers: &[String]) -> bool {
    let pred = normalize_answer(prediction);
    if pred.is_empty() {
        return false;
    }
    let padded_pred = format!(" {pred} ");
    gold_answers.iter().any(|g| {
        let gold = normalize_answer(g);
        !gold.is_empty() && (padded_pred.contains(&format!(" {gold} ")) || format!(" {gold} ").contains(&padded_pred))
    })
}

/// One grading call with the judge prompt.
pub fn llm_judge(prediction: &str, record: &DatasetRecord, cfg: &AbcaConfig, backend: &dyn ChatBackend) -> Result<bool> {
    let gold = serde_json::to_string(&record.gold_answers).unwrap_or_default();
    let prompt = render_prompt(
        TemplateId::Judge,
        &bindings([
            ("question", record.question.clone()),
            ("gold_answers", gold),
            ("prediction", prediction.to_string()),
        ]),
    )?;
    let req = agent_request(cfg, backend, vec![Message::user(prompt)]);
    ask_json(cfg, backend, req, |c| match parse_agent_payload(&c.text, PayloadKind::Judge)? {
        Payload::Judge(b) => Ok(b),
        _ => unreachable!(),
    })
    .map(|r| r.value)
    .map_err(|e| Error::JudgeFailed(e.to_string()))
}

/// Judges a non-abstaining prediction in the requested mode.
pub fn judge(
    prediction: &str,
    record: &DatasetRecord,
    mode: JudgeMode,
    cfg: &AbcaConfig,
    backend: Option<&dyn ChatBackend>,
) -> Result<bool> {
    match mode {
        JudgeMode::StringMatch => Ok(string_match(prediction, &record.gold_answers)),
        JudgeMode::LlmJudge => {
            let backend = backend.ok_or_else(|| Error::JudgeFailed("llm_judge needs a backend".into()))?;
            llm_judge(prediction, record, cfg, backend)
        }
    }
}
