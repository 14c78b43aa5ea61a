use serde::Serialize;

use super::{gold_aspects, Example, HarnessError, Models, PipelineConfig, Trace};
use crate::kg::KnowledgeGraph;
use crate::retrieval::{recall_at_k, ScoredItem};
use crate::sexpr::parse;

pub const ASPECTS: [&str; 3] = ["entity", "relation", "subgraph"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallRow {
    pub aspect: &'static str,
    pub k: usize,
    pub recall: f64,
}

fn ids(items: &[ScoredItem]) -> Vec<&str> {
    items.iter().filter_map(|i| i.id.as_deref()).collect()
}

/// Mean recall@k per aspect over the questions with a parseable gold form.
pub fn recall_curve(
    config: &PipelineConfig,
    graph: &KnowledgeGraph,
    dataset: &[Example],
    models: &Models,
    ks: &[usize],
) -> Result<Vec<RecallRow>, HarnessError> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] > w[1]) || ks[0] == 0 {
        return Err(HarnessError::Config("ks must be positive and ascending".into()));
    }
    let kmax = *ks.last().expect("nonempty");
    let mut wide = *config;
    wide.entity_k = kmax;
    wide.relation_k = kmax;
    wide.subgraph_k = kmax;
    let retriever = models.retriever(graph, &wide);
    let mut sums = vec![[0.0; 3]; ks.len()];
    let mut n = 0usize;
    for ex in dataset {
        let Ok(form) = parse(&ex.gold_sexpr) else { continue };
        let gold = gold_aspects(&form, &retriever);
        let b = retriever.retrieve(&ex.question);
        let lists = [ids(&b.entities), ids(&b.relations), ids(&b.subgraphs)];
        for (row, &k) in sums.iter_mut().zip(ks) {
            for a in 0..3 {
                row[a] += recall_at_k(&gold[a], &lists[a], k);
            }
        }
        n += 1;
    }
    let mut out = Vec::new();
    for (a, aspect) in ASPECTS.iter().enumerate() {
        for (row, &k) in sums.iter().zip(ks) {
            out.push(RecallRow {
                aspect,
                k,
                recall: if n == 0 { 0.0 } else { row[a] / n as f64 },
            });
        }
    }
    Ok(out)
}

fn write_csv<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 input"))
}

/// CSV `aspect,k,recall`.
pub fn recall_csv(rows: &[RecallRow]) -> Result<String, HarnessError> {
    write_csv(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateRow {
    pub aspect: &'static str,
    pub rank: usize,
    pub text: String,
    pub gate_score: f64,
}

/// Non-padding items of one trace, ranked by gate within each aspect.
pub fn gate_rows(trace: &Trace) -> Vec<GateRow> {
    let mut out = Vec::new();
    let aspects = [
        (&trace.bundle.entities, &trace.gates.entities),
        (&trace.bundle.relations, &trace.gates.relations),
        (&trace.bundle.subgraphs, &trace.gates.subgraphs),
    ];
    for (name, (items, gates)) in ASPECTS.iter().zip(aspects) {
        let mut ranked: Vec<(&ScoredItem, f64)> = items
            .iter()
            .zip(gates.iter().copied())
            .filter(|(i, _)| !i.is_padding())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.text.cmp(&b.0.text)));
        for (rank, (item, g)) in ranked.into_iter().enumerate() {
            out.push(GateRow {
                aspect: name,
                rank: rank + 1,
                text: item.text.clone(),
                gate_score: g,
            });
        }
    }
    out
}

/// CSV `aspect,rank,text,gate_score`.
pub fn gate_csv(rows: &[GateRow]) -> Result<String, HarnessError> {
    write_csv(rows)
}
