//! The abstention gate.
//!
//! Each aspect contributes its representative answer embedding `e_i` with
//! significance `α_i = w_i · τ̂_i`. The significance-weighted centroid `c` and
//! the weighted mean angle between `c` and the `e_i` (CAD) decide:
//!
//! 1. `CAD > θ_max`: abstain, the aspects conflict (Type-1);
//! 2. otherwise `1 − c·e_null ≤ ρ_null`: abstain, the consensus is ignorance (Type-2);
//! 3. otherwise aggregate, listing high-deviation aspects as caveats.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, Embedder, Message};
use crate::chat::{agent_request, ask_json};
use crate::config::AbcaConfig;
use crate::error::{Error, Result};
use crate::payload::{parse_agent_payload, Payload, PayloadKind};
use crate::question::Question;
use crate::templates::{bindings, render_prompt, TemplateId};
use crate::vector::{clamp_cosine, normalize, UnitVector};

/// `‖c_raw‖` at or below this is an exact cancellation.
pub const ZERO_CENTROID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectSummary {
    pub aspect: String,
    pub weight: f64,
    pub tau: f64,
    pub representative_answer: String,
    pub embedding: UnitVector,
    pub alpha: f64,
}

impl AspectSummary {
    pub fn new(aspect: impl Into<String>, weight: f64, tau: f64, representative_answer: impl Into<String>, embedding: UnitVector) -> Self {
        Self {
            aspect: aspect.into(),
            weight,
            tau,
            representative_answer: representative_answer.into(),
            embedding,
            alpha: significance(weight, tau),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    AbstainType1,
    AbstainType2,
    Aggregate,
}

impl VerdictKind {
    pub fn is_abstention(self) -> bool {
        !matches!(self, VerdictKind::Aggregate)
    }
}

/// Gate quantities before a final response is composed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub kind: VerdictKind,
    pub cad: f64,
    pub null_distance: f64,
    /// `None` when the weighted sum cancelled exactly.
    pub centroid: Option<UnitVector>,
    pub per_aspect_theta: Vec<f64>,
    pub alphas: Vec<f64>,
    pub caveat_aspects: Vec<String>,
    pub theta_max: f64,
    pub rho_null: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyVerdict {
    #[serde(flatten)]
    pub gate: GateDecision,
    pub final_text: String,
    /// The composition call failed and `final_text` is the templated fallback.
    #[serde(default)]
    pub fallback_text: bool,
}

impl PolicyVerdict {
    pub fn kind(&self) -> VerdictKind {
        self.gate.kind
    }
}

pub fn significance(weight: f64, tau: f64) -> f64 {
    weight * tau
}

fn check_arity(embeddings: &[UnitVector], alphas: &[f64]) -> Result<()> {
    if embeddings.is_empty() || embeddings.len() != alphas.len() {
        return Err(Error::SchemaViolation(format!(
            "{} embeddings for {} significance weights",
            embeddings.len(),
            alphas.len()
        )));
    }
    let dim = embeddings[0].dim();
    if let Some(e) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: e.dim() });
    }
    if alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::SchemaViolation("significance weights must be finite and nonnegative".into()));
    }
    if !alphas.iter().any(|a| *a > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    Ok(())
}

/// `c = Σ α_i e_i / ‖Σ α_i e_i‖`.
pub fn weighted_centroid(embeddings: &[UnitVector], alphas: &[f64]) -> Result<UnitVector> {
    check_arity(embeddings, alphas)?;
    let mut raw = alloc::vec![0.0f64; embeddings[0].dim()];
    for (e, a) in embeddings.iter().zip(alphas) {
        for (r, x) in raw.iter_mut().zip(e.components()) {
            *r += a * x;
        }
    }
    if crate::vector::l2_norm(&raw) <= ZERO_CENTROID_TOLERANCE {
        return Err(Error::ZeroCentroid);
    }
    normalize(&raw)
}

/// Per-aspect angles `θ_i = arccos(e_i · c)` and their α-weighted mean.
pub fn cad(embeddings: &[UnitVector], alphas: &[f64], centroid: &UnitVector) -> Result<(f64, Vec<f64>)> {
    check_arity(embeddings, alphas)?;
    let thetas: Vec<f64> = embeddings.iter().map(|e| e.angle_to(centroid)).collect();
    let total: f64 = alphas.iter().sum();
    let weighted: f64 = thetas.iter().zip(alphas).map(|(t, a)| t * a).sum();
    Ok(((weighted / total).clamp(0.0, PI), thetas))
}

/// Unit mean of the normalised phrase embeddings.
pub fn null_embedding(null_phrases: &[String], embedder: &dyn Embedder) -> Result<UnitVector> {
    if null_phrases.is_empty() {
        return Err(Error::InvalidConfig("no null phrases".into()));
    }
    let vectors = embedder.embed(null_phrases)?;
    let dim = embedder.dimension();
    let mut mean = alloc::vec![0.0f64; dim];
    for v in &vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.dim() });
        }
        for (m, x) in mean.iter_mut().zip(v.components()) {
            *m += x / vectors.len() as f64;
        }
    }
    normalize(&mean)
}

/// Applies the three-way gate. Type-1 is checked first; an exactly cancelled
/// centroid is reported as Type-1 with `cad = π`.
pub fn decide(summaries: &[AspectSummary], cfg: &AbcaConfig, null: &UnitVector) -> Result<GateDecision> {
    if summaries.is_empty() {
        return Err(Error::EmptySample);
    }
    let embeddings: Vec<UnitVector> = summaries.iter().map(|s| s.embedding.clone()).collect();
    let alphas: Vec<f64> = summaries.iter().map(|s| s.alpha).collect();
    let base = GateDecision {
        kind: VerdictKind::AbstainType1,
        cad: PI,
        null_distance: 1.0,
        centroid: None,
        per_aspect_theta: alloc::vec![PI; summaries.len()],
        alphas: alphas.clone(),
        caveat_aspects: Vec::new(),
        theta_max: cfg.theta_max,
        rho_null: cfg.rho_null,
    };
    let centroid = match weighted_centroid(&embeddings, &alphas) {
        Ok(c) => c,
        Err(Error::ZeroCentroid) => return Ok(base),
        Err(e) => return Err(e),
    };
    if centroid.dim() != null.dim() {
        return Err(Error::DimensionMismatch { expected: centroid.dim(), got: null.dim() });
    }
    let (cad_value, thetas) = cad(&embeddings, &alphas, &centroid)?;
    let null_distance = 1.0 - clamp_cosine(centroid.dot(null));
    let kind = classify_gate(cad_value, null_distance, cfg.theta_max, cfg.rho_null);
    let caveat_aspects = if kind == VerdictKind::Aggregate {
        summaries
            .iter()
            .zip(&thetas)
            .filter(|(_, t)| **t > cad_value)
            .map(|(s, _)| s.aspect.clone())
            .collect()
    } else {
        Vec::new()
    };
    Ok(GateDecision {
        kind,
        cad: cad_value,
        null_distance,
        centroid: Some(centroid),
        per_aspect_theta: thetas,
        caveat_aspects,
        ..base
    })
}

/// The gate inequalities on their own.
pub fn classify_gate(cad: f64, null_distance: f64, theta_max: f64, rho_null: f64) -> VerdictKind {
    if cad > theta_max {
        VerdictKind::AbstainType1
    } else if null_distance <= rho_null {
        VerdictKind::AbstainType2
    } else {
        VerdictKind::Aggregate
    }
}

#[derive(Serialize)]
struct DetailRow<'a> {
    aspect: &'a str,
    answer: &'a str,
    significance: f64,
    angular_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    caveat: Option<bool>,
}

fn round4(x: f64) -> f64 {
    libm::round(x * 1e4) / 1e4
}

fn detail_rows<'a>(summaries: &'a [AspectSummary], gate: &'a GateDecision, with_caveats: bool) -> Vec<DetailRow<'a>> {
    summaries
        .iter()
        .zip(&gate.per_aspect_theta)
        .map(|(s, t)| DetailRow {
            aspect: &s.aspect,
            answer: &s.representative_answer,
            significance: round4(s.alpha),
            angular_deviation: round4(*t),
            caveat: with_caveats.then(|| gate.caveat_aspects.contains(&s.aspect)),
        })
        .collect()
}

fn aspect_list(summaries: &[AspectSummary]) -> String {
    summaries.iter().map(|s| s.aspect.as_str()).collect::<Vec<_>>().join(", ")
}

/// Deterministic response used when composition cannot be parsed.
pub fn fallback_response(kind: VerdictKind, summaries: &[AspectSummary]) -> String {
    match kind {
        VerdictKind::AbstainType1 => {
            format!("Abstaining due to conflicting evidence across: {}", aspect_list(summaries))
        }
        VerdictKind::AbstainType2 => {
            format!("Abstaining due to insufficient knowledge across: {}", aspect_list(summaries))
        }
        VerdictKind::Aggregate => summaries
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.alpha.total_cmp(&b.alpha).then(j.cmp(i)))
            .map(|(_, s)| s.representative_answer.clone())
            .unwrap_or_default(),
    }
}

/// One call with the composition prompt matching `gate.kind`; returns the
/// `final_answer` field.
pub fn compose_response(
    gate: &GateDecision,
    summaries: &[AspectSummary],
    question: &Question,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
) -> Result<String> {
    let q = question.prompt_text();
    let prompt = match gate.kind {
        VerdictKind::AbstainType1 => {
            let details = serde_json::json!({
                "centroid_angular_deviation": round4(gate.cad),
                "theta_max": gate.theta_max,
                "aspects": detail_rows(summaries, gate, false),
            });
            render_prompt(
                TemplateId::AbstainConflict,
                &bindings([("question", q), ("conflict_details", details.to_string())]),
            )?
        }
        VerdictKind::AbstainType2 => {
            let details = serde_json::json!({
                "null_consensus_distance": round4(gate.null_distance),
                "rho_null": gate.rho_null,
                "aspects": detail_rows(summaries, gate, false),
            });
            render_prompt(
                TemplateId::AbstainInsufficient,
                &bindings([("question", q), ("insufficiency_details", details.to_string())]),
            )?
        }
        VerdictKind::Aggregate => {
            let mut rows = detail_rows(summaries, gate, true);
            rows.sort_by(|a, b| b.significance.total_cmp(&a.significance));
            render_prompt(
                TemplateId::Aggregate,
                &bindings([("question", q), ("aspects_summary", serde_json::to_string(&rows).unwrap_or_default())]),
            )?
        }
    };
    let req = agent_request(cfg, backend, alloc::vec![Message::user(prompt)]);
    let reply = ask_json(cfg, backend, req, |c| match parse_agent_payload(&c.text, PayloadKind::Final)? {
        Payload::Final(s) => Ok(s),
        _ => unreachable!(),
    })
    .map_err(|e| Error::CompositionFailed(e.to_string()))?;
    Ok(reply.value)
}

/// [`compose_response`] with the templated fallback on failure.
pub fn finalize(
    gate: GateDecision,
    summaries: &[AspectSummary],
    question: &Question,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
) -> PolicyVerdict {
    match compose_response(&gate, summaries, question, cfg, backend) {
        Ok(final_text) => PolicyVerdict { gate, final_text, fallback_text: false },
        Err(_) => {
            let final_text = fallback_response(gate.kind, summaries);
            PolicyVerdict { gate, final_text, fallback_text: true }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn uv(v: &[f64]) -> UnitVector {
        normalize(v).unwrap()
    }

    #[test]
    fn significance_examples() {
        assert!((significance(0.6, 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(significance(1.0, 0.73), 0.73);
        assert!((significance(0.25, 0.8) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn centroid_of_one_is_itself() {
        let e = uv(&[0.2, -0.5, 0.7]);
        let c = weighted_centroid(core::slice::from_ref(&e), &[0.3]).unwrap();
        for (a, b) in c.components().iter().zip(e.components()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_pair_bisector() {
        let es = [uv(&[1.0, 0.0]), uv(&[0.0, 1.0])];
        let c = weighted_centroid(&es, &[0.4, 0.4]).unwrap();
        assert!((c.components()[0] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((c.components()[1] - FRAC_1_SQRT_2).abs() < 1e-15);
        let (v, thetas) = cad(&es, &[0.4, 0.4], &c).unwrap();
        assert!((v - PI / 4.0).abs() < 1e-9);
        assert!(thetas.iter().all(|t| (t - PI / 4.0).abs() < 1e-9));
    }

    #[test]
    fn exact_cancellation() {
        let e = uv(&[0.6, 0.8]);
        let neg = uv(&[-0.6, -0.8]);
        assert_eq!(weighted_centroid(&[e, neg], &[0.5, 0.5]), Err(Error::ZeroCentroid));
    }

    #[test]
    fn cad_zero_cases() {
        let e = uv(&[0.1, 0.2, 0.3]);
        let c = weighted_centroid(core::slice::from_ref(&e), &[1.0]).unwrap();
        assert!(cad(core::slice::from_ref(&e), &[1.0], &c).unwrap().0 < 1e-12);
        let es = vec![e.clone(), e.clone(), e.clone()];
        let alphas = [0.1, 0.5, 0.9];
        let c = weighted_centroid(&es, &alphas).unwrap();
        assert!(cad(&es, &alphas, &c).unwrap().0 < 1e-12);
        assert_eq!(cad(&es, &[0.0, 0.0, 0.0], &c), Err(Error::DegenerateWeights));
    }

    #[test]
    fn gate_inequalities() {
        assert_eq!(classify_gate(0.742, 0.9, 0.5, 0.2), VerdictKind::AbstainType1);
        assert_eq!(classify_gate(0.431, 0.1, 0.5, 0.2), VerdictKind::AbstainType2);
        assert_eq!(classify_gate(0.217, 0.6, 0.5, 0.2), VerdictKind::Aggregate);
        // strict > on theta_max, <= on rho_null
        assert_eq!(classify_gate(0.5, 0.2, 0.5, 0.2), VerdictKind::AbstainType2);
        assert_eq!(classify_gate(0.9, 0.0, 0.5, 0.2), VerdictKind::AbstainType1);
    }

    #[test]
    fn zero_centroid_forces_type1() {
        let cfg = AbcaConfig::default();
        let e = uv(&[1.0, 0.0]);
        let s = [
            AspectSummary::new("a", 0.5, 0.8, "yes", e.clone()),
            AspectSummary::new("b", 0.5, 0.8, "no", uv(&[-1.0, 0.0])),
        ];
        let g = decide(&s, &cfg, &uv(&[0.0, 1.0])).unwrap();
        assert_eq!(g.kind, VerdictKind::AbstainType1);
        assert_eq!(g.cad, PI);
        assert!(g.centroid.is_none());
    }

    #[test]
    fn caveats_are_above_mean_deviation() {
        let cfg = AbcaConfig { theta_max: 1.0, ..Default::default() };
        let s = [
            AspectSummary::new("main", 0.8, 0.9, "A", uv(&[1.0, 0.0, 0.0])),
            AspectSummary::new("minor", 0.2, 0.9, "B", uv(&[0.8, 0.6, 0.0])),
        ];
        let g = decide(&s, &cfg, &uv(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(g.kind, VerdictKind::Aggregate);
        assert_eq!(g.caveat_aspects, vec!["minor".to_string()]);
    }

    #[test]
    fn fallback_texts() {
        let s = [
            AspectSummary::new("Literary", 0.3, 0.8, "Quasimodo", uv(&[1.0, 0.0])),
            AspectSummary::new("Historical", 0.7, 0.8, "Various clerics", uv(&[0.0, 1.0])),
        ];
        assert_eq!(
            fallback_response(VerdictKind::AbstainType1, &s),
            "Abstaining due to conflicting evidence across: Literary, Historical"
        );
        assert_eq!(fallback_response(VerdictKind::Aggregate, &s), "Various clerics");
    }
}
