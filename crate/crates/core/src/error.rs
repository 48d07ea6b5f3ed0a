use alloc::string::String;

use crate::backend::BackendError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("generation carried no token scores")]
    EmptyGeneration,
    #[error("log-probability must be finite and <= 0, got {0}")]
    InvalidLogProb(f64),
    #[error("vector norm is zero or below tolerance")]
    ZeroNorm,
    #[error("vector is not unit norm (|v| = {0})")]
    NotUnitNorm(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid question: {0}")]
    InvalidQuestion(String),
    #[error("missing template binding {{{0}}}")]
    MissingBinding(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("no parseable JSON value in payload: {0}")]
    MalformedPayload(String),
    #[error("payload does not match the expected shape: {0}")]
    SchemaViolation(String),
    #[error("aspect discovery failed: {0}")]
    AspectDiscoveryFailed(String),
    #[error("sampling failed: {0}")]
    SamplingFailed(String),
    #[error("empty sample set")]
    EmptySample,
    #[error("estimator inputs are inconsistent: {0}")]
    EstimatorInconsistency(String),
    #[error("weighted centroid vanished (perfectly opposed evidence)")]
    ZeroCentroid,
    #[error("all significance weights are zero")]
    DegenerateWeights,
    #[error("response composition failed: {0}")]
    CompositionFailed(String),
    #[error("judge failed: {0}")]
    JudgeFailed(String),
    #[error("inconsistent classification inputs: {0}")]
    ClassificationError(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

impl Error {
    /// Whether a re-prompt asking for bare JSON might fix the failure.
    pub fn is_payload_error(&self) -> bool {
        matches!(self, Error::MalformedPayload(_) | Error::SchemaViolation(_))
    }
}
