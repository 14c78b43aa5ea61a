#![allow(dead_code)]

pub mod checks;
pub mod oracle;
pub mod random;
pub mod sparql_grammar;

use std::path::PathBuf;

use kgqa_core::harness::{load_data_dir, Example};
use kgqa_core::kg::KnowledgeGraph;

/// Resolves from either workspace crate, so the acceptance runner can share this module.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn toy_dir() -> PathBuf {
    fixtures_dir().join("toy")
}

pub fn toy() -> (KnowledgeGraph, Vec<Example>) {
    load_data_dir(&toy_dir()).expect("toy fixtures load")
}
