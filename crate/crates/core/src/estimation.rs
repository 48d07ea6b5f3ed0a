//! Aspect-conditioned effect estimation.
//!
//! Under one aspect, K chains of thought (CoTs) are sampled, then N answers,
//! each conditioned on a uniformly drawn CoT. The CoT acts as the mediator:
//!
//! * `p̂(c_j) = #{l : c_l = j} / N` (mediator distribution)
//! * `μ̂(c_j) = mean of a_l over draws with c_l = j` (outcome regression)
//! * `τ̂ = Σ_j p̂(c_j) μ̂(c_j) + (1/N) Σ_l (a_l − μ̂(c_l)) / p̂(c_l)` (AIPW)
//!
//! When p̂ and μ̂ are fitted on the same draws the residual term vanishes; it
//! is kept so externally fitted outcome models can be plugged in.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, CompletionRequest, Message};
use crate::chat::{ask_json, describe};
use crate::config::AbcaConfig;
use crate::discovery::{AspectCandidate, Dimension};
use crate::error::{Error, Result};
use crate::payload::{parse_agent_payload, Payload, PayloadKind};
use crate::question::Question;
use crate::scoring::score_answer;
use crate::templates::{bindings, render_prompt, TemplateId};

/// Lower clamp for self-rated confidences so scores stay in `(0, 1]`.
pub const MIN_SELF_RATED_SCORE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTCandidate {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSample {
    pub cot_index: usize,
    pub text: String,
    pub score: f64,
    /// Score came from a self-rating prompt rather than token log-probabilities.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub self_rated: bool,
}

impl AnswerSample {
    pub fn new(cot_index: usize, text: impl Into<String>, score: f64) -> Self {
        Self { cot_index, text: text.into(), score, self_rated: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorDistribution {
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRegression {
    pub means: Vec<Option<f64>>,
}

/// The two terms of the AIPW estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AipwTerms {
    pub plug_in: f64,
    pub correction: f64,
}

impl AipwTerms {
    pub fn tau(&self) -> f64 {
        self.plug_in + self.correction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectEffect {
    pub aspect: String,
    pub tau: f64,
    pub terms: AipwTerms,
    pub mediator: MediatorDistribution,
    pub regression: OutcomeRegression,
    pub representative_answer: String,
    pub cots: Vec<CoTCandidate>,
    pub samples: Vec<AnswerSample>,
}

impl AspectEffect {
    pub fn self_rated(&self) -> bool {
        self.samples.iter().any(|s| s.self_rated)
    }
}

fn check_indices(samples: &[AnswerSample], k: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(s) = samples.iter().find(|s| s.cot_index >= k) {
        return Err(Error::EstimatorInconsistency(format!("cot index {} out of range for K = {k}", s.cot_index)));
    }
    Ok(())
}

/// Empirical frequency of each CoT among the draws.
pub fn mediator_distribution(samples: &[AnswerSample], k: usize) -> Result<MediatorDistribution> {
    check_indices(samples, k)?;
    let mut counts = alloc::vec![0usize; k];
    for s in samples {
        counts[s.cot_index] += 1;
    }
    let n = samples.len() as f64;
    Ok(MediatorDistribution { probs: counts.into_iter().map(|c| c as f64 / n).collect() })
}

/// Mean score per CoT; `None` for CoTs that were never drawn.
pub fn outcome_regression(samples: &[AnswerSample], k: usize) -> Result<OutcomeRegression> {
    check_indices(samples, k)?;
    let mut sums = alloc::vec![0.0f64; k];
    let mut counts = alloc::vec![0usize; k];
    for s in samples {
        sums[s.cot_index] += s.score;
        counts[s.cot_index] += 1;
    }
    Ok(OutcomeRegression {
        means: sums.into_iter().zip(counts).map(|(s, c)| (c > 0).then(|| s / c as f64)).collect(),
    })
}

/// Both AIPW terms. The plug-in sum skips CoTs with `p̂ = 0`.
pub fn aipw_terms(
    samples: &[AnswerSample],
    mediator: &MediatorDistribution,
    regression: &OutcomeRegression,
) -> Result<AipwTerms> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = mediator.probs.len();
    if regression.means.len() != k {
        return Err(Error::EstimatorInconsistency(format!(
            "mediator has {k} entries, regression {}",
            regression.means.len()
        )));
    }
    let mut plug_in = 0.0;
    for (j, (&p, mu)) in mediator.probs.iter().zip(&regression.means).enumerate() {
        if p > 0.0 {
            let mu = mu.ok_or_else(|| Error::EstimatorInconsistency(format!("no outcome mean for sampled cot {j}")))?;
            plug_in += p * mu;
        }
    }
    let mut residual = 0.0;
    for s in samples {
        let j = s.cot_index;
        let p = *mediator
            .probs
            .get(j)
            .ok_or_else(|| Error::EstimatorInconsistency(format!("cot index {j} out of range")))?;
        if !(p > 0.0) {
            return Err(Error::EstimatorInconsistency(format!("sampled cot {j} has zero mediator probability")));
        }
        let mu = regression.means[j]
            .ok_or_else(|| Error::EstimatorInconsistency(format!("no outcome mean for sampled cot {j}")))?;
        residual += (s.score - mu) / p;
    }
    Ok(AipwTerms { plug_in, correction: residual / samples.len() as f64 })
}

/// The AIPW effect τ̂.
pub fn aipw_effect(samples: &[AnswerSample], mediator: &MediatorDistribution, regression: &OutcomeRegression) -> Result<f64> {
    aipw_terms(samples, mediator, regression).map(|t| t.tau())
}

/// Text of the best-scoring draw among those whose CoT has the highest
/// outcome mean. Exact ties go to the earliest draw.
pub fn representative_answer(samples: &[AnswerSample], regression: &OutcomeRegression) -> Result<String> {
    let best_mu = regression
        .means
        .iter()
        .flatten()
        .copied()
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))))
        .ok_or(Error::EmptySample)?;
    let mut best: Option<&AnswerSample> = None;
    for s in samples {
        if regression.means.get(s.cot_index).copied().flatten() != Some(best_mu) {
            continue;
        }
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best.map(|s| s.text.clone()).ok_or(Error::EmptySample)
}

/// The per-aspect sampling RNG: one ChaCha stream per aspect index, so aspects
/// can be estimated in any order or concurrently with identical results.
pub fn aspect_rng(seed: u64, aspect_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(aspect_index as u64);
    rng
}

/// Draws `n` CoT indices uniformly from `0..k`.
pub fn draw_cot_indices<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

fn sampling_request(cfg: &AbcaConfig, backend: &dyn ChatBackend, prompt: String, slot: usize) -> CompletionRequest {
    let mut req = CompletionRequest::new(backend.model_id(), alloc::vec![Message::user(prompt)]);
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_slot = Some(slot as u32);
    req.seed = Some(cfg.seed.wrapping_add(slot as u64));
    req
}

fn sampling_failed(e: Error) -> Error {
    match e {
        Error::SamplingFailed(_) => e,
        other => Error::SamplingFailed(describe(&other)),
    }
}

/// Samples `k` chains of thought for `aspect`, one call each.
pub fn sample_cots(
    question: &Question,
    aspect: &AspectCandidate,
    dim: &Dimension,
    k: usize,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
) -> Result<Vec<CoTCandidate>> {
    if k == 0 {
        return Err(Error::InvalidConfig("cot_samples must be positive".into()));
    }
    let prompt = render_prompt(
        TemplateId::Cot,
        &bindings([
            ("aspect_value", aspect.value.clone()),
            ("dimension", dim.name.clone()),
            ("question", question.prompt_text()),
        ]),
    )?;
    (0..k)
        .map(|j| {
            let req = sampling_request(cfg, backend, prompt.clone(), j);
            ask_json(cfg, backend, req, |c| parse_agent_payload(&c.text, PayloadKind::Cot))
                .map(|reply| match reply.value {
                    Payload::Cot(text) => CoTCandidate { index: j, text },
                    _ => unreachable!(),
                })
                .map_err(sampling_failed)
        })
        .collect()
}

fn answer_value(text: &str) -> Result<String> {
    match parse_agent_payload(text, PayloadKind::Answer)? {
        Payload::Answer(a) => Ok(a),
        _ => unreachable!(),
    }
}

fn self_rate(question: &Question, answer: &str, cfg: &AbcaConfig, backend: &dyn ChatBackend, slot: usize) -> Result<f64> {
    let prompt = render_prompt(
        TemplateId::SelfRating,
        &bindings([("question", question.prompt_text()), ("answer", answer.to_string())]),
    )?;
    let mut req = sampling_request(cfg, backend, prompt, slot);
    req.temperature = cfg.agent_temperature;
    let reply = ask_json(cfg, backend, req, |c| match parse_agent_payload(&c.text, PayloadKind::Confidence)? {
        Payload::Confidence(x) => Ok(x),
        _ => unreachable!(),
    })?;
    Ok(reply.value.clamp(MIN_SELF_RATED_SCORE, 1.0))
}

/// Draws `n` answers, each conditioned on a uniformly chosen CoT. The index
/// sequence is drawn up front, before any backend call.
pub fn sample_answers<R: Rng + ?Sized>(
    question: &Question,
    aspect: &AspectCandidate,
    cots: &[CoTCandidate],
    n: usize,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
    rng: &mut R,
) -> Result<Vec<AnswerSample>> {
    if n == 0 || cots.is_empty() {
        return Err(Error::InvalidConfig("answer sampling needs n >= 1 and at least one CoT".into()));
    }
    let indices = draw_cot_indices(n, cots.len(), rng);
    indices
        .into_iter()
        .enumerate()
        .map(|(slot, j)| {
            let prompt = render_prompt(
                TemplateId::Answer,
                &bindings([
                    ("aspect_value", aspect.value.clone()),
                    ("question", question.prompt_text()),
                    ("CoT", cots[j].text.clone()),
                ]),
            )?;
            let mut req = sampling_request(cfg, backend, prompt, slot);
            req.want_logprobs = true;
            let reply = match ask_json(cfg, backend, req.clone(), |c| answer_value(&c.text)) {
                Ok(r) => Ok(Some(r)),
                Err(Error::Backend(BackendError::MissingLogprobs)) => Ok(None),
                Err(e) => Err(e),
            }
            .map_err(sampling_failed)?;
            let (text, tokens, raw) = match reply {
                Some(r) => (r.value, r.completion.tokens, r.raw),
                None => {
                    req.want_logprobs = false;
                    let r = ask_json(cfg, backend, req, |c| answer_value(&c.text)).map_err(sampling_failed)?;
                    (r.value, None, r.raw)
                }
            };
            let sample = match tokens.filter(|t| !t.is_empty()) {
                Some(tokens) => {
                    let score = score_answer(question.answer_mode, &tokens, &raw, &text).map_err(sampling_failed)?;
                    AnswerSample { cot_index: j, text, score, self_rated: false }
                }
                None => {
                    let score = self_rate(question, &text, cfg, backend, slot).map_err(sampling_failed)?;
                    AnswerSample { cot_index: j, text, score, self_rated: true }
                }
            };
            Ok(sample)
        })
        .collect()
}

/// Fits p̂, μ̂ and τ̂ on one sample set and picks the representative answer.
pub fn fit_effect(aspect: &str, cots: Vec<CoTCandidate>, samples: Vec<AnswerSample>) -> Result<AspectEffect> {
    let k = cots.len();
    let mediator = mediator_distribution(&samples, k)?;
    let regression = outcome_regression(&samples, k)?;
    let terms = aipw_terms(&samples, &mediator, &regression)?;
    let representative_answer = representative_answer(&samples, &regression)?;
    Ok(AspectEffect {
        aspect: aspect.to_string(),
        tau: terms.tau(),
        terms,
        mediator,
        regression,
        representative_answer,
        cots,
        samples,
    })
}

/// CoT sampling, answer sampling and AIPW fitting for one aspect.
pub fn estimate_aspect<R: Rng + ?Sized>(
    question: &Question,
    dim: &Dimension,
    aspect: &AspectCandidate,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
    rng: &mut R,
) -> Result<AspectEffect> {
    let cots = sample_cots(question, aspect, dim, cfg.cot_samples, cfg, backend)?;
    let samples = sample_answers(question, aspect, &cots, cfg.answer_samples, cfg, backend, rng)?;
    fit_effect(&aspect.value, cots, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn samples(pairs: &[(usize, f64)]) -> Vec<AnswerSample> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(j, a))| AnswerSample::new(j, format!("answer {i}"), a))
            .collect()
    }

    #[test]
    fn mediator_counts() {
        let s = samples(&[(0, 0.1), (0, 0.1), (1, 0.1), (1, 0.1)]);
        assert_eq!(mediator_distribution(&s, 2).unwrap().probs, vec![0.5, 0.5]);
        assert_eq!(mediator_distribution(&samples(&[(0, 0.3)]), 2).unwrap().probs, vec![1.0, 0.0]);
        assert_eq!(mediator_distribution(&[], 2), Err(Error::EmptySample));
    }

    #[test]
    fn regression_means() {
        let s = samples(&[(0, 0.8), (0, 0.6), (1, 0.4)]);
        let r = outcome_regression(&s, 2).unwrap();
        assert!((r.means[0].unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(r.means[1], Some(0.4));
        let r = outcome_regression(&samples(&[(0, 0.5), (0, 0.7)]), 2).unwrap();
        assert_eq!(r.means[1], None);
        assert_eq!(outcome_regression(&[], 1), Err(Error::EmptySample));
    }

    #[test]
    fn aipw_worked_example_same_sample() {
        let s = samples(&[(0, 0.8), (0, 0.6), (1, 0.4)]);
        let p = mediator_distribution(&s, 2).unwrap();
        let mu = outcome_regression(&s, 2).unwrap();
        let terms = aipw_terms(&s, &p, &mu).unwrap();
        // (2/3)(0.7) + (1/3)(0.4)
        assert!((terms.plug_in - 0.6).abs() < 1e-12);
        assert!(terms.correction.abs() < 1e-12);
    }

    #[test]
    fn aipw_external_outcome_model() {
        let s = samples(&[(0, 0.8), (0, 0.6), (1, 0.4)]);
        let p = mediator_distribution(&s, 2).unwrap();
        let mu = OutcomeRegression { means: vec![Some(0.5), Some(0.5)] };
        let terms = aipw_terms(&s, &p, &mu).unwrap();
        // 0.5 + (1/3)[0.3/(2/3) + 0.1/(2/3) - 0.1/(1/3)] = 0.5 + 0.1
        assert!((terms.plug_in - 0.5).abs() < 1e-12);
        assert!((terms.correction - 0.1).abs() < 1e-12);
        assert!((terms.tau() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn aipw_identity_case() {
        let s = samples(&[(1, 0.37), (1, 0.37), (1, 0.37)]);
        let p = mediator_distribution(&s, 2).unwrap();
        let mu = outcome_regression(&s, 2).unwrap();
        assert!((aipw_effect(&s, &p, &mu).unwrap() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn aipw_inconsistent_inputs() {
        let s = samples(&[(0, 0.5), (1, 0.5)]);
        let p = MediatorDistribution { probs: vec![1.0, 0.0] };
        let mu = outcome_regression(&s, 2).unwrap();
        assert!(matches!(aipw_effect(&s, &p, &mu), Err(Error::EstimatorInconsistency(_))));
        let p = mediator_distribution(&s, 2).unwrap();
        let mu = OutcomeRegression { means: vec![Some(0.5), None] };
        assert!(matches!(aipw_effect(&s, &p, &mu), Err(Error::EstimatorInconsistency(_))));
    }

    #[test]
    fn representative_picks_argmax_cot() {
        let s = samples(&[(1, 0.4), (0, 0.8), (0, 0.6)]);
        let r = outcome_regression(&s, 2).unwrap();
        assert_eq!(representative_answer(&s, &r).unwrap(), "answer 1");
        let single = samples(&[(0, 0.2)]);
        assert_eq!(representative_answer(&single, &outcome_regression(&single, 1).unwrap()).unwrap(), "answer 0");
    }

    #[test]
    fn representative_tie_break() {
        // both CoTs have mean 0.5; highest score among them is 0.6, twice
        let s = samples(&[(0, 0.4), (1, 0.6), (0, 0.6), (1, 0.4)]);
        let r = outcome_regression(&s, 2).unwrap();
        assert_eq!(r.means, vec![Some(0.5), Some(0.5)]);
        // enumerate: first sample with max mean and max score
        let max_score = s.iter().map(|x| x.score).fold(0.0, f64::max);
        let oracle = s.iter().position(|x| x.score == max_score).unwrap();
        assert_eq!(representative_answer(&s, &r).unwrap(), format!("answer {oracle}"));
    }

    #[test]
    fn documented_seed_index_sequence() {
        let mut rng = aspect_rng(42, 0);
        assert_eq!(draw_cot_indices(4, 2, &mut rng), GOLDEN_SEED42_N4_K2);
        let mut rng = aspect_rng(7, 3);
        assert_eq!(draw_cot_indices(1, 1, &mut rng), vec![0]);
    }

    // recorded once from ChaCha8 (seed 42, stream 0)
    const GOLDEN_SEED42_N4_K2: [usize; 4] = [1, 1, 0, 0];

    fn arb_samples() -> impl Strategy<Value = (Vec<AnswerSample>, usize)> {
        (1usize..=8).prop_flat_map(|k| {
            (proptest::collection::vec((0..k, 1e-6f64..=1.0), 1..=32), Just(k))
                .prop_map(|(v, k)| (samples(&v), k))
        })
    }

    proptest! {
        #[test]
        fn same_sample_fit_properties((s, k) in arb_samples()) {
            let p = mediator_distribution(&s, k).unwrap();
            let mu = outcome_regression(&s, k).unwrap();
            let terms = aipw_terms(&s, &p, &mu).unwrap();
            prop_assert!(terms.correction.abs() <= 1e-12);
            prop_assert!(terms.tau() > 0.0 && terms.tau() <= 1.0 + 1e-12);
            let total: f64 = p.probs.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            for &q in &p.probs {
                let scaled = q * s.len() as f64;
                prop_assert!((scaled - libm::round(scaled)).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_invariance((s, k) in arb_samples(), rot in 0usize..32) {
            let mut shuffled = s.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            let p1 = mediator_distribution(&s, k).unwrap();
            let p2 = mediator_distribution(&shuffled, k).unwrap();
            prop_assert_eq!(&p1, &p2);
            let m1 = outcome_regression(&s, k).unwrap();
            let m2 = outcome_regression(&shuffled, k).unwrap();
            for (a, b) in m1.means.iter().zip(&m2.means) {
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
            let t1 = aipw_effect(&s, &p1, &m1).unwrap();
            let t2 = aipw_effect(&shuffled, &p2, &m2).unwrap();
            prop_assert!((t1 - t2).abs() < 1e-12);
        }
    }
}
