#![allow(dead_code)]

use std::path::PathBuf;

use abca::{MockBackend, MockEmbedder, MockScript, NullEmbeddingCache};
use abca_core::{run_pipeline, AbcaConfig, AuditBundle, Question};

pub const CONFLICT_Q: &str = "Who is the bell-ringer of Notre Dame?";
pub const NULL_Q: &str = "Will community battery storage in my town pay back its cost by 2040?";
pub const CONSENSUS_Q: &str = "Which venture capitalist invested early in both SpaceX and Tesla?";
pub const SPORT_Q: &str = "What is the most popular sport in Japan in 2001?";

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn script(name: &str) -> MockScript {
    MockScript::load(&fixture(&format!("scripts/{name}.json"))).unwrap()
}

pub fn mock_pair(name: &str, cfg: &AbcaConfig) -> (MockBackend, MockEmbedder) {
    let s = script(name);
    let e = MockEmbedder::new(cfg.seed, cfg.embedding_dim).with_aliases(&s.embedding_aliases);
    (MockBackend::new(s).unwrap(), e)
}

pub fn run_script(name: &str, question: &str, cfg: &AbcaConfig) -> AuditBundle {
    let (b, e) = mock_pair(name, cfg);
    let null = NullEmbeddingCache::new().get(&cfg.null_phrases, &e).unwrap();
    let q = Question::open_ended("q", question).unwrap();
    run_pipeline(&q, cfg, &b, &e, &null).unwrap()
}
