//! End-to-end processing of one question.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, Embedder, Message};
use crate::chat::{agent_request, ask_json};
use crate::config::AbcaConfig;
use crate::discovery::{discover_with_transcript, AspectFrame, DebateTranscript};
use crate::error::{Error, Result};
use crate::estimation::{aspect_rng, estimate_aspect, AspectEffect};
use crate::payload::{parse_agent_payload, Payload, PayloadKind};
use crate::policy::{decide, finalize, AspectSummary, PolicyVerdict, VerdictKind};
use crate::question::Question;
use crate::templates::{bindings, render_prompt, TemplateId};
use crate::vector::UnitVector;

pub const DEGRADED_DIRECT_ANSWER: &str = "discovery_failed_direct_answer";
pub const DEGRADED_SELF_RATED: &str = "self_rated_scores";
pub const DEGRADED_COMPOSITION: &str = "composition_fallback";

/// Everything produced for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBundle {
    pub question: Question,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<AspectFrame>,
    /// Set when discovery failed; the partial debate is kept for inspection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discovery_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_transcript: Option<DebateTranscript>,
    pub effects: Vec<AspectEffect>,
    pub summaries: Vec<AspectSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<PolicyVerdict>,
    pub final_text: String,
    pub abstained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstention: Option<VerdictKind>,
    #[serde(default)]
    pub degraded: Vec<String>,
}

/// Single-shot answer used when no aspect frame could be built.
pub fn direct_answer(question: &Question, cfg: &AbcaConfig, backend: &dyn ChatBackend) -> Result<String> {
    let prompt = render_prompt(TemplateId::DirectAnswer, &bindings([("question", question.prompt_text())]))?;
    let req = agent_request(cfg, backend, alloc::vec![Message::user(prompt)]);
    ask_json(cfg, backend, req, |c| match parse_agent_payload(&c.text, PayloadKind::Answer)? {
        Payload::Answer(a) => Ok(a),
        _ => unreachable!(),
    })
    .map(|r| r.value)
}

/// Discovery, per-aspect estimation, the abstention gate and composition.
///
/// `null` is the precomputed null-consensus embedding for `embedder`. A failed
/// discovery falls back to [`direct_answer`] and is flagged; any other error
/// aborts the question.
pub fn run_pipeline(
    question: &Question,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
    embedder: &dyn Embedder,
    null: &UnitVector,
) -> Result<AuditBundle> {
    question.validate()?;
    cfg.validate()?;
    let (frame, transcript) = discover_with_transcript(question, cfg, backend);
    let frame = match frame {
        Ok(f) => f,
        Err(Error::AspectDiscoveryFailed(reason)) => {
            let answer = direct_answer(question, cfg, backend)?;
            return Ok(AuditBundle {
                question: question.clone(),
                frame: None,
                discovery_error: Some(reason),
                partial_transcript: Some(transcript),
                effects: Vec::new(),
                summaries: Vec::new(),
                verdict: None,
                final_text: answer,
                abstained: false,
                abstention: None,
                degraded: alloc::vec![DEGRADED_DIRECT_ANSWER.to_string()],
            });
        }
        Err(e) => return Err(e),
    };

    let mut effects = Vec::with_capacity(frame.aspects.len());
    for (i, wa) in frame.aspects.iter().enumerate() {
        let mut rng = aspect_rng(cfg.seed, i);
        effects.push(estimate_aspect(question, &frame.dimension, &wa.aspect, cfg, backend, &mut rng)?);
    }

    let answers: Vec<String> = effects.iter().map(|e| e.representative_answer.clone()).collect();
    let embeddings = embedder.embed(&answers)?;
    if embeddings.len() != answers.len() {
        return Err(Error::SchemaViolation("embedder returned the wrong number of vectors".into()));
    }
    let summaries: Vec<AspectSummary> = frame
        .aspects
        .iter()
        .zip(&effects)
        .zip(embeddings)
        .map(|((wa, eff), e)| AspectSummary::new(wa.aspect.value.clone(), wa.weight, eff.tau, eff.representative_answer.clone(), e))
        .collect();

    let gate = decide(&summaries, cfg, null)?;
    let verdict = finalize(gate, &summaries, question, cfg, backend);

    let mut degraded = Vec::new();
    if effects.iter().any(|e| e.self_rated()) {
        degraded.push(DEGRADED_SELF_RATED.to_string());
    }
    if verdict.fallback_text {
        degraded.push(DEGRADED_COMPOSITION.to_string());
    }
    let kind = verdict.kind();
    Ok(AuditBundle {
        question: question.clone(),
        frame: Some(frame),
        discovery_error: None,
        partial_transcript: None,
        effects,
        summaries,
        final_text: verdict.final_text.clone(),
        verdict: Some(verdict),
        abstained: kind.is_abstention(),
        abstention: kind.is_abstention().then_some(kind),
        degraded,
    })
}
