mod common;

use std::collections::BTreeSet;

use common::random::random_graph;
use kgqa_core::kg::{linearize_documents, two_hop_relations, EntityId, KnowledgeGraph, Value};
use proptest::prelude::*;
use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two-hop relations by plain triple scans.
fn two_hop_scan(g: &KnowledgeGraph, start: &BTreeSet<EntityId>) -> BTreeSet<String> {
    let touches = |t: &kgqa_core::kg::Triple, e: &EntityId| &t.head == e || t.tail.as_entity() == Some(e);
    let mut frontier = start.clone();
    for t in g.triples() {
        if start.iter().any(|e| touches(t, e)) {
            frontier.insert(t.head.clone());
            if let Some(x) = t.tail.as_entity() {
                frontier.insert(x.clone());
            }
        }
    }
    g.triples()
        .iter()
        .filter(|t| frontier.iter().any(|e| touches(t, e)))
        .map(|t| t.relation.clone())
        .collect()
}

#[test]
fn indexes_agree_with_triple_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for max in [10, 300, 10_000] {
        let (g, _) = random_graph(&mut rng, max);
        for t in g.triples() {
            assert!(g.with_head(&t.head).any(|x| x == t));
            assert!(g.with_relation(&t.relation).any(|x| x == t));
            assert!(g.with_tail(&t.tail).any(|x| x == t));
        }
        for (id, _) in g.entities() {
            let n = g.triples().iter().filter(|t| &t.head == id).count();
            assert_eq!(g.with_head(id).count(), n);
        }
        for r in g.relations() {
            assert_eq!(g.with_relation(r).count(), g.triples().iter().filter(|t| t.relation == r).count());
        }
    }
}

#[test]
fn documents_are_reproducible_across_loads() {
    let (a, _) = common::toy();
    let (b, _) = common::toy();
    let da = linearize_documents(&a, 100);
    let db = linearize_documents(&b, 100);
    assert_eq!(da, db);
    assert!(da.iter().all(|d| d.text.split_whitespace().count() <= 100));
}

#[test]
fn two_hop_matches_scan_on_toy() {
    let (g, _) = common::toy();
    for (id, _) in g.entities() {
        let s: BTreeSet<EntityId> = [id.clone()].into();
        assert_eq!(two_hop_relations(&g, s.iter()).unwrap(), two_hop_scan(&g, &s), "{id}");
    }
}

#[test]
fn two_hop_names_unknown_entity() {
    let (g, _) = common::toy();
    let bad = EntityId::new("m.nope").unwrap();
    let err = two_hop_relations(&g, [&bad]).unwrap_err();
    assert!(err.to_string().contains("m.nope"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_hop_is_monotone_and_matches_scan(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = random_graph(&mut rng, 80);
        let ids: Vec<EntityId> = g.entities().map(|(id, _)| id.clone()).collect();
        let big: BTreeSet<EntityId> = ids.iter().cloned().choose_multiple(&mut rng, 4).into_iter().collect();
        let small: BTreeSet<EntityId> = big.iter().cloned().choose_multiple(&mut rng, 2).into_iter().collect();
        let rb = two_hop_relations(&g, big.iter()).unwrap();
        let rs = two_hop_relations(&g, small.iter()).unwrap();
        prop_assert!(rs.is_subset(&rb));
        prop_assert_eq!(&rb, &two_hop_scan(&g, &big));
    }

    #[test]
    fn literal_tails_are_indexed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = random_graph(&mut rng, 60);
        for t in g.triples() {
            if let Value::Literal(_) = &t.tail {
                prop_assert!(g.with_tail(&t.tail).any(|x| x == t));
            }
        }
    }
}
