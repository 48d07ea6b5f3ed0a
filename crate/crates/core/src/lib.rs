//! Aspect-based causal abstention.
//!
//! A question is examined under several causally valid *aspects* discovered by a
//! two-agent debate. For every aspect, chains of thought are sampled and an
//! augmented inverse-probability-weighted (AIPW) effect is estimated over the
//! answers they lead to. The aspect answers are then embedded and the
//! significance-weighted centroid angular deviation (CAD) decides between a
//! knowledge-conflict abstention, a knowledge-insufficiency abstention, or an
//! aggregated answer.
//!
//! The crate is `no_std` (with `alloc`). Model access goes through the
//! [`ChatBackend`] and [`Embedder`] traits; transports, caches and file formats
//! live in the `abca` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod backend;
mod chat;
pub mod config;
pub mod discovery;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod payload;
pub mod pipeline;
pub mod policy;
pub mod question;
pub mod scoring;
pub mod templates;
pub mod vector;

pub use backend::{
    BackendError, ChatBackend, Completion, CompletionRequest, Embedder, Message, Provenance, Role,
    Usage,
};
pub use config::{AbcaConfig, JudgeMode};
pub use discovery::{AspectCandidate, AspectFrame, DebateTranscript, Dimension, WeightedAspect};
pub use error::{Error, Result};
pub use estimation::{AnswerSample, AspectEffect, CoTCandidate, MediatorDistribution, OutcomeRegression};
pub use eval::{Cell, ConfusionMatrix, MetricsReport};
pub use pipeline::{run_pipeline, AuditBundle};
pub use policy::{AspectSummary, PolicyVerdict, VerdictKind};
pub use question::{AnswerMode, DatasetRecord, Question};
pub use scoring::TokenScore;
pub use templates::TemplateId;
pub use vector::UnitVector;
