use std::collections::BTreeSet;

use kgqa_core::generator::oracle_generate;
use kgqa_core::harness::{score_answers, score_forms, AnswerScore, Metrics};
use kgqa_core::kg::Value;
use kgqa_core::sexpr::AnswerSet;
use proptest::prelude::*;

fn ids(xs: &BTreeSet<u8>) -> BTreeSet<String> {
    xs.iter().map(|x| format!("m.{x}")).collect()
}

proptest! {
    #[test]
    fn answer_scores_are_consistent(pred in prop::collection::btree_set(0u8..12, 0..6), gold in prop::collection::btree_set(0u8..12, 0..6)) {
        let p = AnswerSet::Values(ids(&pred).iter().map(|s| Value::entity(s)).collect());
        let s = score_answers(&p, &ids(&gold));
        for v in [s.precision, s.recall, s.f1, s.hits1, s.acc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if s.acc == 1.0 {
            prop_assert_eq!(s.f1, 1.0);
        }
        prop_assert_eq!(s.acc == 1.0, !gold.is_empty() && pred == gold);
        prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-15);
    }

    #[test]
    fn aggregate_is_the_mean(rows in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, any::<bool>(), any::<bool>()), 1..40)) {
        let rows: Vec<(AnswerScore, f64, f64)> = rows
            .iter()
            .map(|&(f1, h, em, bm)| {
                let em = if em && bm { 1.0 } else { 0.0 };
                let s = AnswerScore { precision: f1, recall: f1, f1, hits1: h, acc: 0.0 };
                (s, em, if bm { 1.0 } else { 0.0 })
            })
            .collect();
        let m = Metrics::aggregate(&rows, 0);
        let n = rows.len() as f64;
        prop_assert!((m.f1 - rows.iter().map(|r| r.0.f1).sum::<f64>() / n).abs() < 1e-12);
        prop_assert!((m.hits1 - rows.iter().map(|r| r.0.hits1).sum::<f64>() / n).abs() < 1e-12);
        prop_assert!(m.em <= m.bm);
    }
}

#[test]
fn form_match_uses_canonical_print() {
    let beam = oracle_generate("(JOIN  (R r)   m.1)").unwrap();
    assert_eq!(score_forms(&beam, "(JOIN (R r) m.1)").unwrap(), (1.0, 1.0));
    assert_eq!(score_forms(&beam, "(JOIN r m.1)").unwrap(), (0.0, 0.0));
    assert!(score_forms(&beam, "(JOIN").is_err());
}
