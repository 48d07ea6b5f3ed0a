//! Std companion to `abca-core`: chat and embedding backends, the response
//! cache, config and dataset files, the benchmark runner and report output.

pub mod backend;
pub mod benchmark;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use backend::cache::{cache_key, CachedBackend};
pub use backend::embed::{HttpEmbedder, MockEmbedder, NullEmbeddingCache};
pub use backend::http::HttpBackend;
pub use backend::mock::{MockBackend, MockScript};
pub use benchmark::{run_benchmark, BenchmarkOptions, BenchmarkReport, RecordResult};
pub use config::{load_config, save_config};
pub use dataset::{load_dataset, write_dataset};
pub use error::HarnessError;
pub use report::{emit_report, ReportFormat};
