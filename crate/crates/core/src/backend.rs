//! Model access traits and the request/response types they exchange.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::scoring::TokenScore;
use crate::vector::UnitVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// A chat-completion request.
///
/// `sample_slot` distinguishes otherwise identical prompts that are sampled
/// repeatedly (the j-th chain of thought, the l-th answer draw). It is part of
/// the cache key but is not sent over the wire; `seed` is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_slot: Option<u32>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_tokens: 1024,
            want_logprobs: false,
            seed: None,
            sample_slot: None,
        }
    }

    /// Checks the structural invariants: at least one message, opening with a
    /// system or user turn, non-negative temperature and a positive token budget.
    pub fn validate(&self) -> Result<(), BackendError> {
        match self.messages.first() {
            None => return Err(BackendError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => {
                return Err(BackendError::InvalidRequest("first message is from the assistant".into()))
            }
            _ => {}
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// All message contents joined by blank lines; what mock matchers see.
    pub fn rendered_prompt(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&m.content);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Live,
    Cache,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenScore>>,
    #[serde(default)]
    pub usage: Usage,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("provider returned no log-probabilities")]
    MissingLogprobs,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited)
    }
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError>;

    /// Model identifier placed into requests built by the pipeline.
    fn model_id(&self) -> String;
}

/// A sentence-embedding provider.
pub trait Embedder: Send + Sync {
    /// One unit vector per input text, all of [`Embedder::dimension`] components.
    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, BackendError>;

    fn dimension(&self) -> usize;

    /// Stable identity used to key precomputed vectors (model name, seed, ...).
    fn identity(&self) -> String;
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }

    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, BackendError> {
        (**self).embed(texts)
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }

    fn model_id(&self) -> String {
        (**self).model_id()
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, BackendError> {
        (**self).embed(texts)
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn request_invariants() {
        let mut req = CompletionRequest::new("m", vec![Message::user("hi")]);
        assert!(req.validate().is_ok());
        req.messages.insert(0, Message::assistant("x"));
        assert!(req.validate().is_err());
        req.messages.clear();
        assert!(req.validate().is_err());
    }

    #[test]
    fn retryability() {
        assert!(BackendError::RateLimited.is_retryable());
        assert!(BackendError::Transport("reset".into()).is_retryable());
        assert!(!BackendError::ProviderError("400".into()).is_retryable());
        assert!(!BackendError::MissingLogprobs.is_retryable());
    }
}
