//! Answer-quality scores on the probability scale.
//!
//! Open-ended answers are scored by the per-token geometric-mean probability
//! (NWGM) of the answer tokens; categorical answers by the joint probability of
//! the chosen option. Both lie in `(0, 1]`.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::question::AnswerMode;

/// One generated token and its natural-log probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    pub logprob: f64,
}

impl TokenScore {
    pub fn new(token: impl Into<String>, logprob: f64) -> Result<Self> {
        check_logprob(logprob)?;
        Ok(Self { token: token.into(), logprob })
    }
}

fn check_logprob(lp: f64) -> Result<()> {
    if lp.is_nan() || lp > 0.0 {
        return Err(Error::InvalidLogProb(lp));
    }
    Ok(())
}

/// Neumaier-compensated sum; keeps `mean(s ++ s) == mean(s)` to the last few ulps.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `exp(mean(logprob))` over the tokens.
pub fn nwgm_score(tokens: &[TokenScore]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::EmptyGeneration);
    }
    for t in tokens {
        check_logprob(t.logprob)?;
    }
    let mean = compensated_sum(tokens.iter().map(|t| t.logprob)) / tokens.len() as f64;
    Ok(libm::exp(mean).clamp(f64::MIN_POSITIVE, 1.0))
}

/// `exp(logprob)` of the chosen option.
pub fn categorical_score(option_logprob: f64) -> Result<f64> {
    check_logprob(option_logprob)?;
    Ok(libm::exp(option_logprob).clamp(f64::MIN_POSITIVE, 1.0))
}

/// The tokens whose text overlaps the answer value inside `completion_text`.
///
/// Falls back to every token when the token texts do not concatenate to the
/// completion, or the value cannot be located after its JSON key.
pub fn answer_span<'a>(tokens: &'a [TokenScore], completion_text: &str, value: &str) -> &'a [TokenScore] {
    let concatenated_len: usize = tokens.iter().map(|t| t.token.len()).sum();
    if value.is_empty() || concatenated_len != completion_text.len() {
        return tokens;
    }
    let mut offset = 0;
    for t in tokens {
        if completion_text.get(offset..offset + t.token.len()) != Some(t.token.as_str()) {
            return tokens;
        }
        offset += t.token.len();
    }
    let search_from = completion_text
        .find("answer")
        .and_then(|k| completion_text[k..].find(':').map(|c| k + c))
        .unwrap_or(0);
    let Some(rel) = completion_text[search_from..].find(value) else {
        return tokens;
    };
    let start = search_from + rel;
    let end = start + value.len();
    let mut first = None;
    let mut last = 0;
    let mut pos = 0;
    for (i, t) in tokens.iter().enumerate() {
        let (ts, te) = (pos, pos + t.token.len());
        pos = te;
        if te > start && ts < end {
            first.get_or_insert(i);
            last = i;
        }
    }
    match first {
        Some(f) => &tokens[f..=last],
        None => tokens,
    }
}

/// Scores one answer completion according to the question's answer mode.
pub fn score_answer(mode: AnswerMode, tokens: &[TokenScore], completion_text: &str, value: &str) -> Result<f64> {
    let span = answer_span(tokens, completion_text, value);
    match mode {
        AnswerMode::OpenEnded => nwgm_score(span),
        AnswerMode::Categorical => {
            if span.is_empty() {
                return Err(Error::EmptyGeneration);
            }
            for t in span {
                check_logprob(t.logprob)?;
            }
            categorical_score(compensated_sum(span.iter().map(|t| t.logprob)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn toks(lps: &[f64]) -> Vec<TokenScore> {
        lps.iter().map(|&lp| TokenScore { token: "t".into(), logprob: lp }).collect()
    }

    fn ln(x: f64) -> f64 {
        libm::log(x)
    }

    #[test]
    fn nwgm_examples() {
        assert!((nwgm_score(&toks(&[ln(0.5), ln(0.5)])).unwrap() - 0.5).abs() < 1e-15);
        assert!((nwgm_score(&toks(&[ln(0.8)])).unwrap() - 0.8).abs() < 1e-15);
        let four = nwgm_score(&toks(&[ln(0.9); 4])).unwrap();
        let two = nwgm_score(&toks(&[ln(0.9); 2])).unwrap();
        assert!((four - 0.9).abs() < 1e-15);
        assert!((two - 0.9).abs() < 1e-15);
    }

    #[test]
    fn nwgm_errors() {
        assert_eq!(nwgm_score(&[]), Err(Error::EmptyGeneration));
        assert_eq!(nwgm_score(&toks(&[0.1])), Err(Error::InvalidLogProb(0.1)));
    }

    #[test]
    fn categorical_examples() {
        assert_eq!(categorical_score(0.0).unwrap(), 1.0);
        assert!((categorical_score(ln(0.25)).unwrap() - 0.25).abs() < 1e-15);
        // 0.7 = 7/10; exp(ln 7 - ln 10) through a different route
        let via_ratio = libm::exp(ln(7.0) - ln(10.0));
        assert!((categorical_score(ln(0.7)).unwrap() - via_ratio).abs() < 1e-15);
        assert!((categorical_score(ln(0.7)).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(categorical_score(0.5), Err(Error::InvalidLogProb(0.5)));
    }

    #[test]
    fn span_restricts_to_answer_tokens() {
        let text = "{\"answer\": \"Tokyo\"}";
        let pieces = ["{\"", "answer", "\":", " \"", "Tok", "yo", "\"}"];
        let lps = [0.0, 0.0, 0.0, 0.0, ln(0.5), ln(0.5), 0.0];
        let tokens: Vec<TokenScore> = pieces
            .iter()
            .zip(lps)
            .map(|(p, lp)| TokenScore { token: (*p).into(), logprob: lp })
            .collect();
        let span = answer_span(&tokens, text, "Tokyo");
        assert_eq!(span.len(), 2);
        assert!((score_answer(AnswerMode::OpenEnded, &tokens, text, "Tokyo").unwrap() - 0.5).abs() < 1e-15);
        assert!((score_answer(AnswerMode::Categorical, &tokens, text, "Tokyo").unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn span_falls_back_on_mismatch() {
        let tokens = toks(&[ln(0.5), ln(0.5)]);
        assert_eq!(answer_span(&tokens, "something else", "x").len(), 2);
        let v = vec![TokenScore { token: "ab".into(), logprob: 0.0 }];
        assert_eq!(answer_span(&v, "ab", "zz").len(), 1);
    }
}
