use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::kg::{load_graph_with_labels, IngestReport, KnowledgeGraph};

/// One dataset line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub gold_sexpr: String,
    pub gold_answers: Vec<String>,
}

impl Example {
    pub fn gold_set(&self) -> BTreeSet<String> {
        self.gold_answers.iter().cloned().collect()
    }
}

/// Reads JSON lines; blank lines are skipped.
pub fn load_dataset<R: Read>(src: R) -> Result<Vec<Example>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(src).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| HarnessError::Dataset {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

/// Graph files of a data directory: `triples.tsv`, `aliases.tsv`, optional `labels.tsv`.
pub fn load_graph_dir(dir: &Path) -> Result<(KnowledgeGraph, IngestReport), HarnessError> {
    let open = |name: &str| File::open(dir.join(name)).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.join(name).display())));
    let labels = dir.join("labels.tsv");
    let labels = if labels.exists() { Some(open("labels.tsv")?) } else { None };
    Ok(load_graph_with_labels(open("triples.tsv")?, open("aliases.tsv")?, labels)?)
}

/// Graph plus `questions.jsonl` of a data directory.
pub fn load_data_dir(dir: &Path) -> Result<(KnowledgeGraph, Vec<Example>), HarnessError> {
    let (g, _) = load_graph_dir(dir)?;
    let path = dir.join("questions.jsonl");
    let f = File::open(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok((g, load_dataset(f)?))
}
