//! Dual-agent aspect discovery.
//!
//! A discovery agent (DAgent) proposes and a critical agent (CAgent) prunes, in
//! three steps: pick the conditioning dimension, stratify it into aspects, and
//! reconcile per-aspect weights. Each step runs at most `debate_rounds` rounds.
//! Validity of dimensions and aspects is judged by the agents themselves
//! through the prompt wording; nothing here second-guesses their verdicts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, Message};
use crate::chat::{agent_request, ask_json, describe};
use crate::config::AbcaConfig;
use crate::error::{Error, Result};
use crate::payload::{parse_aspects, parse_dimensions, parse_weights, AspectWeight};
use crate::question::Question;
use crate::templates::{bindings, render_prompt, TemplateId};

/// Tolerance on the weight sum of an [`AspectFrame`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

const DIMENSION_FOLLOW_UP: &str = "After critical review, these dimensions were retained: ";
const ASPECT_FOLLOW_UP: &str = "After critical review, these aspects were retained: ";
const WEIGHT_FOLLOW_UP: &str = "The Critical Agent assessed your weights as follows: ";
const FOLLOW_UP_TAIL: &str =
    "\n\nPropose any additional candidates in the same JSON format. Return an empty list [] if you have nothing to add.";
const WEIGHT_FOLLOW_UP_TAIL: &str = "\n\nRevise your weights in the same JSON format.";

/// The conditioning dimension X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub description: String,
    pub justification: String,
    pub score: f64,
}

/// One aspect x_i of the dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectCandidate {
    pub value: String,
    pub description: String,
    pub justification: String,
}

impl AspectCandidate {
    pub fn named(value: impl Into<String>) -> Self {
        Self { value: value.into(), description: String::new(), justification: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAspect {
    pub aspect: AspectCandidate,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agent {
    DAgent,
    CAgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DebateStep {
    Identify,
    Generate,
    Reconcile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub agent: Agent,
    pub step: DebateStep,
    pub round: u32,
    pub prompt: String,
    pub raw_response: String,
}

/// Audit record of every agent turn, in the order they happened.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub entries: Vec<TranscriptEntry>,
}

impl DebateTranscript {
    fn push(&mut self, agent: Agent, step: DebateStep, round: u32, prompt: &str, raw: &str) {
        self.entries.push(TranscriptEntry {
            agent,
            step,
            round,
            prompt: prompt.to_string(),
            raw_response: raw.to_string(),
        });
    }

    pub fn max_round(&self, step: DebateStep) -> u32 {
        self.entries.iter().filter(|e| e.step == step).map(|e| e.round).max().unwrap_or(0)
    }

    /// Steps appear in identify, generate, reconcile order and rounds never
    /// decrease within a step.
    pub fn is_well_ordered(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[0].step < w[1].step || (w[0].step == w[1].step && w[0].round <= w[1].round))
    }
}

/// Output of discovery: the dimension, its weighted aspects and the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectFrame {
    pub question_id: String,
    pub dimension: Dimension,
    pub aspects: Vec<WeightedAspect>,
    pub transcript: DebateTranscript,
}

impl AspectFrame {
    pub fn validate(&self, max_aspects: usize) -> Result<()> {
        let n = self.aspects.len();
        if n == 0 || n > max_aspects {
            return Err(Error::SchemaViolation(format!("frame has {n} aspects, allowed 1..={max_aspects}")));
        }
        let sum: f64 = self.aspects.iter().map(|a| a.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::SchemaViolation(format!("aspect weights sum to {sum}")));
        }
        if self.aspects.iter().any(|a| !(0.0..=1.0).contains(&a.weight)) {
            return Err(Error::SchemaViolation("aspect weight outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// L1 distance between two weight vectors of equal length.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Divides by the sum so the weights add to one.
pub fn renormalize(weights: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::SchemaViolation(format!("weights sum to {sum}")));
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// Elementwise mean of the two agents' weights, renormalised to sum to one.
pub fn average_weights(w_d: &[f64], w_c: &[f64]) -> Result<Vec<f64>> {
    if w_d.len() != w_c.len() {
        return Err(Error::SchemaViolation(format!(
            "weight vectors have different lengths ({} vs {})",
            w_d.len(),
            w_c.len()
        )));
    }
    let mean: Vec<f64> = w_d.iter().zip(w_c).map(|(d, c)| (d + c) / 2.0).collect();
    renormalize(&mean)
}

fn same_value(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

fn merge_dimensions(retained: &[Dimension], proposed: Vec<Dimension>) -> Vec<Dimension> {
    let mut out: Vec<Dimension> = retained.to_vec();
    for d in proposed {
        if !out.iter().any(|o| same_value(&o.name, &d.name)) {
            out.push(d);
        }
    }
    out
}

/// Drops later duplicates by case-insensitive value.
pub fn dedup_aspects(aspects: Vec<AspectCandidate>) -> Vec<AspectCandidate> {
    let mut out: Vec<AspectCandidate> = Vec::with_capacity(aspects.len());
    for a in aspects {
        if !out.iter().any(|o| same_value(&o.value, &a.value)) {
            out.push(a);
        }
    }
    out
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

/// Maps weight records onto `aspects`, by value when every aspect is matched
/// exactly once and by position otherwise.
fn align_weights(aspects: &[AspectCandidate], records: &[AspectWeight]) -> Result<Vec<f64>> {
    if records.len() != aspects.len() {
        return Err(Error::SchemaViolation(format!(
            "expected {} weights, got {}",
            aspects.len(),
            records.len()
        )));
    }
    let by_value: Option<Vec<f64>> = aspects
        .iter()
        .map(|a| {
            let mut hits = records.iter().filter(|r| same_value(&r.value, &a.value));
            match (hits.next(), hits.next()) {
                (Some(r), None) => Some(r.weight),
                _ => None,
            }
        })
        .collect();
    Ok(by_value.unwrap_or_else(|| records.iter().map(|r| r.weight).collect()))
}

/// One question's debate. Holds the transcript as it grows.
pub struct DebateSession<'a> {
    question: &'a Question,
    cfg: &'a AbcaConfig,
    backend: &'a dyn ChatBackend,
    transcript: DebateTranscript,
}

impl<'a> DebateSession<'a> {
    pub fn new(question: &'a Question, cfg: &'a AbcaConfig, backend: &'a dyn ChatBackend) -> Self {
        Self { question, cfg, backend, transcript: DebateTranscript::default() }
    }

    pub fn transcript(&self) -> &DebateTranscript {
        &self.transcript
    }

    pub fn into_transcript(self) -> DebateTranscript {
        self.transcript
    }

    fn failed(e: &Error) -> Error {
        match e {
            Error::Backend(_) => e.clone(),
            other => Error::AspectDiscoveryFailed(describe(other)),
        }
    }

    fn turn<T>(
        &mut self,
        agent: Agent,
        step: DebateStep,
        round: u32,
        messages: Vec<Message>,
        parse: impl FnMut(&crate::backend::Completion) -> Result<T>,
    ) -> Result<T> {
        let prompt = messages.last().map(|m| m.content.clone()).unwrap_or_default();
        let req = agent_request(self.cfg, self.backend, messages);
        match ask_json(self.cfg, self.backend, req, parse) {
            Ok(reply) => {
                self.transcript.push(agent, step, round, &prompt, &reply.raw);
                Ok(reply.value)
            }
            Err(e) => {
                self.transcript.push(agent, step, round, &prompt, "");
                Err(Self::failed(&e))
            }
        }
    }

    /// Step 1: runs `debate_rounds` propose/critique rounds and returns the
    /// top-scored dimension of the latest non-empty CAgent ranking. Ties keep
    /// CAgent's list order. A score of 0 means rejected.
    pub fn identify_dimension(&mut self) -> Result<Dimension> {
        let question = self.question.prompt_text();
        let dagent_prompt = render_prompt(TemplateId::DagentIdentify, &bindings([("question", question.clone())]))?;
        let mut retained: Vec<Dimension> = Vec::new();
        let mut last_dagent_raw: Option<String> = None;

        for round in 1..=self.cfg.debate_rounds {
            let mut messages = alloc::vec![Message::user(dagent_prompt.clone())];
            if let Some(prev) = &last_dagent_raw {
                messages.push(Message::assistant(prev.clone()));
                messages.push(Message::user(format!("{DIMENSION_FOLLOW_UP}{}{FOLLOW_UP_TAIL}", to_json(&retained))));
            }
            let mut raw_seen = String::new();
            let proposed = self.turn(Agent::DAgent, DebateStep::Identify, round, messages, |c| {
                raw_seen = c.text.clone();
                parse_dimensions(&c.text)
            })?;
            last_dagent_raw = Some(raw_seen);

            let candidates = merge_dimensions(&retained, proposed);
            if candidates.is_empty() {
                continue;
            }
            let cagent_prompt = render_prompt(
                TemplateId::CagentIdentify,
                &bindings([("question", question.clone()), ("dimensions_json", to_json(&candidates))]),
            )?;
            let mut ranked = self.turn(
                Agent::CAgent,
                DebateStep::Identify,
                round,
                alloc::vec![Message::user(cagent_prompt)],
                |c| parse_dimensions(&c.text),
            )?;
            ranked.retain(|d| d.score > 0.0);
            // stable: equal scores keep CAgent's order
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
            if !ranked.is_empty() {
                retained = ranked;
            }
        }

        retained
            .into_iter()
            .next()
            .ok_or_else(|| Error::AspectDiscoveryFailed("every proposed dimension was rejected".into()))
    }

    /// Step 2: stratifies `dim` into at most `max_aspects` aspects.
    pub fn generate_aspects(&mut self, dim: &Dimension) -> Result<Vec<AspectCandidate>> {
        let question = self.question.prompt_text();
        let dagent_prompt = render_prompt(
            TemplateId::DagentGenerate,
            &bindings([
                ("question", question.clone()),
                ("dimension_name", dim.name.clone()),
                ("dimension_description", dim.description.clone()),
                ("dimension_justification", dim.justification.clone()),
                ("max_aspects", self.cfg.max_aspects.to_string()),
            ]),
        )?;
        let mut retained: Vec<AspectCandidate> = Vec::new();
        let mut last_dagent_raw: Option<String> = None;

        for round in 1..=self.cfg.debate_rounds {
            let mut messages = alloc::vec![Message::user(dagent_prompt.clone())];
            if let Some(prev) = &last_dagent_raw {
                messages.push(Message::assistant(prev.clone()));
                messages.push(Message::user(format!("{ASPECT_FOLLOW_UP}{}{FOLLOW_UP_TAIL}", to_json(&retained))));
            }
            let mut raw_seen = String::new();
            let proposed = self.turn(Agent::DAgent, DebateStep::Generate, round, messages, |c| {
                raw_seen = c.text.clone();
                parse_aspects(&c.text)
            })?;
            last_dagent_raw = Some(raw_seen);

            let mut candidates = retained.clone();
            candidates.extend(proposed);
            let candidates = dedup_aspects(candidates);
            if candidates.is_empty() {
                continue;
            }
            let cagent_prompt = render_prompt(
                TemplateId::CagentGenerate,
                &bindings([
                    ("question", question.clone()),
                    ("dimension_name", dim.name.clone()),
                    ("dimension_description", dim.description.clone()),
                    ("aspects_json", to_json(&candidates)),
                ]),
            )?;
            let kept = self.turn(
                Agent::CAgent,
                DebateStep::Generate,
                round,
                alloc::vec![Message::user(cagent_prompt)],
                |c| parse_aspects(&c.text),
            )?;
            retained = dedup_aspects(kept);
        }

        retained.truncate(self.cfg.max_aspects);
        if retained.is_empty() {
            return Err(Error::AspectDiscoveryFailed("no aspect survived critique".into()));
        }
        Ok(retained)
    }

    /// Step 3: alternating weight proposals until the L1 distance between the
    /// agents drops below the threshold or the rounds run out; returns the
    /// renormalised average of the last pair.
    pub fn reconcile_weights(&mut self, dim: &Dimension, aspects: &[AspectCandidate]) -> Result<Vec<WeightedAspect>> {
        if aspects.is_empty() {
            return Err(Error::AspectDiscoveryFailed("no aspects to weight".into()));
        }
        let question = self.question.prompt_text();
        let dagent_prompt = render_prompt(
            TemplateId::DagentWeights,
            &bindings([
                ("question", question.clone()),
                ("dimension_name", dim.name.clone()),
                ("dimension_description", dim.description.clone()),
                ("aspects_json", to_json(aspects)),
            ]),
        )?;

        let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut history: Option<(String, String)> = None;
        for round in 1..=self.cfg.debate_rounds {
            let mut messages = alloc::vec![Message::user(dagent_prompt.clone())];
            if let Some((d_raw, c_json)) = &history {
                messages.push(Message::assistant(d_raw.clone()));
                messages.push(Message::user(format!("{WEIGHT_FOLLOW_UP}{c_json}{WEIGHT_FOLLOW_UP_TAIL}")));
            }
            let mut d_raw = String::new();
            let (d_records, w_d) = self.turn(Agent::DAgent, DebateStep::Reconcile, round, messages, |c| {
                d_raw = c.text.clone();
                let recs = parse_weights(&c.text)?;
                let w = align_weights(aspects, &recs)?;
                Ok((recs, w))
            })?;

            let justifications: Vec<String> =
                d_records.iter().map(|r| format!("{}: {}", r.value, r.justification)).collect();
            let cagent_prompt = render_prompt(
                TemplateId::CagentWeights,
                &bindings([
                    ("question", question.clone()),
                    ("dimension_name", dim.name.clone()),
                    ("dimension_description", dim.description.clone()),
                    ("aspects_weights_json", to_json(&d_records)),
                    ("dagent_justifications", justifications.join("; ")),
                ]),
            )?;
            let (c_records, w_c) = self.turn(
                Agent::CAgent,
                DebateStep::Reconcile,
                round,
                alloc::vec![Message::user(cagent_prompt)],
                |c| {
                    let recs = parse_weights(&c.text)?;
                    let w = align_weights(aspects, &recs)?;
                    Ok((recs, w))
                },
            )?;

            let converged = l1_distance(&w_d, &w_c) < self.cfg.weight_convergence_threshold;
            history = Some((d_raw, to_json(&c_records)));
            last = Some((w_d, w_c));
            if converged {
                break;
            }
        }

        let (w_d, w_c) = last.ok_or_else(|| Error::AspectDiscoveryFailed("no weight rounds ran".into()))?;
        let weights = average_weights(&w_d, &w_c).map_err(|e| Self::failed(&e))?;
        Ok(aspects
            .iter()
            .cloned()
            .zip(weights)
            .map(|(aspect, weight)| WeightedAspect { aspect, weight })
            .collect())
    }
}

/// Runs all three discovery steps for `question`.
pub fn discover(question: &Question, cfg: &AbcaConfig, backend: &dyn ChatBackend) -> Result<AspectFrame> {
    let mut session = DebateSession::new(question, cfg, backend);
    let dimension = session.identify_dimension()?;
    let aspects = session.generate_aspects(&dimension)?;
    let aspects = session.reconcile_weights(&dimension, &aspects)?;
    let frame = AspectFrame {
        question_id: question.id.clone(),
        dimension,
        aspects,
        transcript: session.into_transcript(),
    };
    frame.validate(cfg.max_aspects)?;
    Ok(frame)
}

/// Like [`discover`] but returns the partial transcript alongside any failure.
pub fn discover_with_transcript(
    question: &Question,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
) -> (Result<AspectFrame>, DebateTranscript) {
    let mut session = DebateSession::new(question, cfg, backend);
    let result = (|| {
        let dimension = session.identify_dimension()?;
        let aspects = session.generate_aspects(&dimension)?;
        let aspects = session.reconcile_weights(&dimension, &aspects)?;
        Ok((dimension, aspects))
    })();
    let transcript = session.into_transcript();
    match result {
        Ok((dimension, aspects)) => {
            let frame = AspectFrame {
                question_id: question.id.clone(),
                dimension,
                aspects,
                transcript: transcript.clone(),
            };
            match frame.validate(cfg.max_aspects) {
                Ok(()) => (Ok(frame), transcript),
                Err(e) => (Err(e), transcript),
            }
        }
        Err(e) => (Err(e), transcript),
    }
}
