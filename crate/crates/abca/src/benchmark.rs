//! Runs the pipeline over a dataset and scores the outcomes.

use abca_core::eval::{classify, judge, metrics};
use abca_core::{
    run_pipeline, AbcaConfig, AuditBundle, Cell, ChatBackend, ConfusionMatrix, DatasetRecord, Embedder, MetricsReport,
    VerdictKind,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::embed::NullEmbeddingCache;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkOptions {
    /// Worker threads; 1 runs the records sequentially.
    pub parallelism: usize,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self { parallelism: 1 }
    }
}

/// Outcome for one record. `error` is set, and `cell` unset, when the record aborted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: String,
    pub answerable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<AuditBundle>,
}

impl RecordResult {
    pub fn abstention(&self) -> Option<VerdictKind> {
        self.bundle.as_ref().and_then(|b| b.abstention)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// Computed over the records that did not abort.
    pub metrics: MetricsReport,
    pub results: Vec<RecordResult>,
    /// Ids of aborted records.
    pub aborted: Vec<String>,
}

fn run_one(
    rec: &DatasetRecord,
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
    embedder: &dyn Embedder,
    null: &abca_core::UnitVector,
    judge_backend: Option<&dyn ChatBackend>,
) -> RecordResult {
    let mut out = RecordResult {
        id: rec.id.clone(),
        answerable: rec.answerable,
        category: rec.category.clone(),
        correct: None,
        cell: None,
        error: None,
        bundle: None,
    };
    let scored = (|| -> abca_core::Result<(AuditBundle, Option<bool>, Cell)> {
        let q = rec.to_question()?;
        let bundle = run_pipeline(&q, cfg, backend, embedder, null)?;
        let correct = if bundle.abstained {
            None
        } else {
            Some(judge(&bundle.final_text, rec, cfg.judge_mode, cfg, judge_backend)?)
        };
        let cell = classify(bundle.abstained, correct, rec.answerable)?;
        Ok((bundle, correct, cell))
    })();
    match scored {
        Ok((bundle, correct, cell)) => {
            out.correct = correct;
            out.cell = Some(cell);
            out.bundle = Some(bundle);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Confusion matrix, metrics and abstention counts over finished results.
pub fn summarize(results: &[RecordResult]) -> MetricsReport {
    let mut cm = ConfusionMatrix::default();
    let (mut t1, mut t2) = (0, 0);
    for r in results {
        if let Some(cell) = r.cell {
            cm.record(cell, r.answerable);
            match r.abstention() {
                Some(VerdictKind::AbstainType1) => t1 += 1,
                Some(VerdictKind::AbstainType2) => t2 += 1,
                _ => {}
            }
        }
    }
    metrics(&cm).with_abstentions(t1, t2)
}

/// Runs every record. Results come back in dataset order regardless of
/// `parallelism`; a record that fails is listed in `aborted` and left out of
/// the metrics.
pub fn run_benchmark(
    records: &[DatasetRecord],
    cfg: &AbcaConfig,
    backend: &dyn ChatBackend,
    embedder: &dyn Embedder,
    opts: BenchmarkOptions,
    judge_backend: Option<&dyn ChatBackend>,
) -> Result<BenchmarkReport> {
    if records.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    cfg.validate()?;
    let null = NullEmbeddingCache::new().get(&cfg.null_phrases, embedder)?;
    let results: Vec<RecordResult> = if opts.parallelism <= 1 {
        records.iter().map(|r| run_one(r, cfg, backend, embedder, &null, judge_backend)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.parallelism)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        pool.install(|| {
            records.par_iter().map(|r| run_one(r, cfg, backend, embedder, &null, judge_backend)).collect()
        })
    };
    let aborted = results.iter().filter(|r| r.error.is_some()).map(|r| r.id.clone()).collect();
    Ok(BenchmarkReport { metrics: summarize(&results), results, aborted })
}
