//! Pipeline configuration.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::DEFAULT_EMBEDDING_DIM;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    #[default]
    StringMatch,
    LlmJudge,
}

pub fn default_null_phrases() -> Vec<String> {
    vec![
        "I don't know".into(),
        "No data".into(),
        "Cannot be determined".into(),
        "Insufficient evidence".into(),
        "Unknowable".into(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcaConfig {
    /// Debate rounds per discovery step (T).
    pub debate_rounds: u32,
    /// Upper bound on the number of aspects.
    pub max_aspects: usize,
    /// Chains of thought per aspect (K).
    pub cot_samples: usize,
    /// Answer draws per aspect (N).
    pub answer_samples: usize,
    /// Type-1 threshold on CAD, radians.
    pub theta_max: f64,
    /// Type-2 threshold on `1 - c·e_null`.
    pub rho_null: f64,
    /// L1 distance under which the two weight vectors count as converged.
    pub weight_convergence_threshold: f64,
    pub null_phrases: Vec<String>,
    pub judge_mode: JudgeMode,
    pub seed: u64,
    pub embedding_dim: usize,
    /// Sampling temperature for chains of thought and answers.
    pub temperature: f64,
    /// Temperature for the debate agents, composition and judging.
    pub agent_temperature: f64,
    pub max_tokens: u32,
    /// Re-prompts after a malformed agent payload before giving up.
    pub parse_retries: u32,
}

impl Default for AbcaConfig {
    fn default() -> Self {
        Self {
            debate_rounds: 2,
            max_aspects: 5,
            cot_samples: 2,
            answer_samples: 4,
            theta_max: 0.5,
            rho_null: 0.2,
            weight_convergence_threshold: 0.1,
            null_phrases: default_null_phrases(),
            judge_mode: JudgeMode::StringMatch,
            seed: 42,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            temperature: 0.7,
            agent_temperature: 0.0,
            max_tokens: 1024,
            parse_retries: 2,
        }
    }
}

impl AbcaConfig {
    /// The single-round, single-sample configuration (T = K = N = 1).
    pub fn lite() -> Self {
        Self { debate_rounds: 1, cot_samples: 1, answer_samples: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.debate_rounds == 0 {
            return fail("debate_rounds must be positive".into());
        }
        if self.max_aspects == 0 {
            return fail("max_aspects must be positive".into());
        }
        if self.cot_samples == 0 || self.answer_samples == 0 {
            return fail("cot_samples and answer_samples must be positive".into());
        }
        if !(self.theta_max > 0.0 && self.theta_max < core::f64::consts::PI) {
            return fail(format!("theta_max must lie in (0, pi), got {}", self.theta_max));
        }
        if !(self.rho_null > 0.0 && self.rho_null < 1.0) {
            return fail(format!("rho_null must lie in (0, 1), got {}", self.rho_null));
        }
        if !(self.weight_convergence_threshold >= 0.0) || !self.weight_convergence_threshold.is_finite() {
            return fail("weight_convergence_threshold must be a nonnegative real".into());
        }
        if self.null_phrases.is_empty() || self.null_phrases.iter().any(|p| p.trim().is_empty()) {
            return fail("null_phrases must be a nonempty list of nonempty strings".into());
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if !(self.temperature >= 0.0) || !(self.agent_temperature >= 0.0) {
            return fail("temperatures must be >= 0".into());
        }
        if self.max_tokens == 0 {
            return fail("max_tokens must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = AbcaConfig::default();
        assert_eq!((c.debate_rounds, c.max_aspects, c.cot_samples, c.answer_samples), (2, 5, 2, 4));
        assert_eq!((c.theta_max, c.rho_null), (0.5, 0.2));
        assert!(c.validate().is_ok());
        assert!(AbcaConfig::lite().validate().is_ok());
    }

    #[test]
    fn defaults_round_trip() {
        let c = AbcaConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<AbcaConfig>(&s).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<AbcaConfig>(r#"{"debate_round": 3}"#).is_err());
        let c: AbcaConfig = serde_json::from_str(r#"{"debate_rounds": 3}"#).unwrap();
        assert_eq!(c.debate_rounds, 3);
        assert_eq!(c.max_aspects, 5);
    }

    #[test]
    fn bounds() {
        let bad = [
            AbcaConfig { debate_rounds: 0, ..Default::default() },
            AbcaConfig { theta_max: 0.0, ..Default::default() },
            AbcaConfig { theta_max: 4.0, ..Default::default() },
            AbcaConfig { rho_null: 1.0, ..Default::default() },
            AbcaConfig { null_phrases: Vec::new(), ..Default::default() },
            AbcaConfig { weight_convergence_threshold: -0.1, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
