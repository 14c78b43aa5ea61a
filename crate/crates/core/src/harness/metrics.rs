use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::generator::Candidate;
use crate::sexpr::{parse, AnswerSet, ParseError};

/// Answer-level scores of one question.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnswerScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hits1: f64,
    pub acc: f64,
}

/// Set precision/recall/F1; Hits@1 checks the canonically first predicted answer;
/// accuracy is exact set equality.
pub fn score_answers(predicted: &AnswerSet, gold: &BTreeSet<String>) -> AnswerScore {
    let pred = predicted.canonical();
    if pred.is_empty() || gold.is_empty() {
        return AnswerScore::default();
    }
    let pset: BTreeSet<&str> = pred.iter().map(String::as_str).collect();
    let hit = pset.iter().filter(|p| gold.contains(**p)).count() as f64;
    let precision = hit / pset.len() as f64;
    let recall = hit / gold.len() as f64;
    let f1 = if hit == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let exact = pset.len() == gold.len() && pset.iter().all(|p| gold.contains(*p));
    AnswerScore {
        precision,
        recall,
        f1,
        hits1: if gold.contains(&pred[0]) { 1.0 } else { 0.0 },
        acc: if exact { 1.0 } else { 0.0 },
    }
}

/// `(em, bm)`: whether the canonical gold form is the rank-1 candidate / anywhere in the beam.
pub fn score_forms(beam: &[Candidate], gold_sexpr: &str) -> Result<(f64, f64), ParseError> {
    let gold = parse(gold_sexpr)?.to_string();
    let em = beam.first().is_some_and(|c| c.printed() == gold);
    let bm = beam.iter().any(|c| c.printed() == gold);
    Ok((em as u8 as f64, bm as u8 as f64))
}

/// Dataset means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub f1: f64,
    pub hits1: f64,
    pub acc: f64,
    pub em: f64,
    pub bm: f64,
    pub questions: usize,
    /// questions left out because their gold answer set is empty
    pub excluded: usize,
}

impl Metrics {
    /// Means of per-question `(answer score, em, bm)`.
    pub fn aggregate(rows: &[(AnswerScore, f64, f64)], excluded: usize) -> Metrics {
        let n = rows.len();
        if n == 0 {
            return Metrics {
                excluded,
                ..Metrics::default()
            };
        }
        let mean = |f: &dyn Fn(&(AnswerScore, f64, f64)) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
        Metrics {
            f1: mean(&|r| r.0.f1),
            hits1: mean(&|r| r.0.hits1),
            acc: mean(&|r| r.0.acc),
            em: mean(&|r| r.1),
            bm: mean(&|r| r.2),
            questions: n,
            excluded,
        }
    }
}
