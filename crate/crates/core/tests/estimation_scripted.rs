//! Aspect estimation against small in-process scripted backends.

use abca_core::backend::{BackendError, ChatBackend, Completion, CompletionRequest, Provenance, Usage};
use abca_core::estimation::{aspect_rng, draw_cot_indices, estimate_aspect};
use abca_core::{AbcaConfig, AspectCandidate, Dimension, Question, TokenScore};

/// CoT prompts get "path-<slot>"; answer prompts conditioned on path-j answer
/// "answer-j" with every token at probability `probs[j]`.
struct Paths {
    probs: Vec<f64>,
    logprobs: bool,
}

impl ChatBackend for Paths {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        let prompt = req.rendered_prompt();
        let (text, p) = if prompt.contains("generate a chain of thought") {
            (format!("{{\"CoT\": \"path-{}\"}}", req.sample_slot.unwrap_or(0)), 1.0)
        } else if let Some(j) = (0..self.probs.len()).find(|j| prompt.contains(&format!("Chain of Thought: path-{j}"))) {
            (format!("{{\"answer\": \"answer-{j}\"}}"), self.probs[j])
        } else if prompt.contains("Rate how likely") {
            ("{\"confidence\": 0.25}".to_string(), 1.0)
        } else {
            return Err(BackendError::ProviderError(format!("unexpected prompt: {prompt}")));
        };
        let tokens = match (req.want_logprobs, self.logprobs) {
            (true, true) => Some(vec![TokenScore { token: text.clone(), logprob: p.ln() }]),
            (true, false) => return Err(BackendError::MissingLogprobs),
            (false, _) => None,
        };
        Ok(Completion { text, tokens, usage: Usage::default(), provenance: Provenance::Mock })
    }

    fn model_id(&self) -> String {
        "paths".into()
    }
}

fn fixtures() -> (Question, Dimension, AspectCandidate) {
    let q = Question::open_ended("q1", "Who is the bell-ringer of Notre Dame?").unwrap();
    let dim = Dimension { name: "Interpretive Frame".into(), description: String::new(), justification: String::new(), score: 0.9 };
    (q, dim, AspectCandidate::named("Literary Tradition"))
}

#[test]
fn two_cots_match_hand_evaluation() {
    let (q, dim, aspect) = fixtures();
    let cfg = AbcaConfig::default();
    let backend = Paths { probs: vec![0.8, 0.4], logprobs: true };

    // seed 42, first aspect: draws [1, 1, 0, 0]
    assert_eq!(draw_cot_indices(4, 2, &mut aspect_rng(42, 0)), vec![1, 1, 0, 0]);
    let eff = estimate_aspect(&q, &dim, &aspect, &cfg, &backend, &mut aspect_rng(cfg.seed, 0)).unwrap();

    // p = (2/4, 2/4), mu = (0.8, 0.4); plug-in 0.5*0.8 + 0.5*0.4 = 0.6, residuals all zero
    assert_eq!(eff.mediator.probs, vec![0.5, 0.5]);
    assert!((eff.regression.means[0].unwrap() - 0.8).abs() < 1e-12);
    assert!((eff.regression.means[1].unwrap() - 0.4).abs() < 1e-12);
    assert!(eff.terms.correction.abs() < 1e-12);
    assert!((eff.tau - 0.6).abs() < 1e-12);
    assert_eq!(eff.representative_answer, "answer-0");
    assert_eq!(eff.samples.iter().map(|s| s.cot_index).collect::<Vec<_>>(), vec![1, 1, 0, 0]);
}

#[test]
fn constant_scores_give_that_score() {
    let (q, dim, aspect) = fixtures();
    let cfg = AbcaConfig::default();
    let backend = Paths { probs: vec![0.9, 0.9], logprobs: true };
    for seed in 0..20 {
        let eff = estimate_aspect(&q, &dim, &aspect, &cfg, &backend, &mut aspect_rng(seed, 0)).unwrap();
        assert!((eff.tau - 0.9).abs() < 1e-12);
    }
}

#[test]
fn lite_config_uses_the_single_sample() {
    let (q, dim, aspect) = fixtures();
    let cfg = AbcaConfig::lite();
    let backend = Paths { probs: vec![0.37], logprobs: true };
    let eff = estimate_aspect(&q, &dim, &aspect, &cfg, &backend, &mut aspect_rng(1, 0)).unwrap();
    assert_eq!(eff.samples.len(), 1);
    assert!((eff.tau - eff.samples[0].score).abs() < 1e-15);
    assert!((eff.tau - 0.37).abs() < 1e-12);
}

#[test]
fn missing_logprobs_fall_back_to_self_rating() {
    let (q, dim, aspect) = fixtures();
    let cfg = AbcaConfig::default();
    let backend = Paths { probs: vec![0.8, 0.4], logprobs: false };
    let eff = estimate_aspect(&q, &dim, &aspect, &cfg, &backend, &mut aspect_rng(cfg.seed, 0)).unwrap();
    assert!(eff.self_rated());
    assert!((eff.tau - 0.25).abs() < 1e-12);
}

#[test]
fn estimation_is_byte_reproducible() {
    let (q, dim, aspect) = fixtures();
    let cfg = AbcaConfig::default();
    let backend = Paths { probs: vec![0.7, 0.2], logprobs: true };
    let run = || {
        let eff = estimate_aspect(&q, &dim, &aspect, &cfg, &backend, &mut aspect_rng(cfg.seed, 2)).unwrap();
        serde_json::to_string(&eff).unwrap()
    };
    assert_eq!(run(), run());
}
