//! Refinement of generated forms against the graph, and beam execution.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::generator::Candidate;
use crate::kg::{two_hop_relations, EntityId, KnowledgeGraph};
use crate::sexpr::{compile_sparql, evaluate, AnswerSet, EntityRef, SExpr};
use crate::text::trigram_cosine;

pub type SimilarityFn = fn(&str, &str) -> f64;

/// Case-insensitive cosine over character-trigram counts.
pub fn similarity(a: &str, b: &str) -> f64 {
    trigram_cosine(a, b)
}

#[derive(Debug, Clone, Copy)]
pub struct RefinementConfig {
    pub entity_threshold: f64,
    pub similarity: SimilarityFn,
    pub max_per_slot: usize,
    pub max_candidates: usize,
    /// Accept forms that evaluate without error to an empty answer.
    pub allow_empty_answers: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            entity_threshold: 0.4,
            similarity,
            max_per_slot: 5,
            max_candidates: 50,
            allow_empty_answers: false,
        }
    }
}

fn entity_alternatives(r: &EntityRef, graph: &KnowledgeGraph, c: &RefinementConfig) -> Vec<(EntityId, f64)> {
    if let EntityRef::Id(id) = r {
        if graph.contains_entity(id) {
            return vec![(id.clone(), 1.0)];
        }
    }
    let mention = r.text();
    let mut alts: Vec<(EntityId, f64)> = graph
        .entities()
        .map(|(id, label)| (id.clone(), (c.similarity)(mention, label)))
        .filter(|(_, s)| *s >= c.entity_threshold)
        .collect();
    alts.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    alts.truncate(c.max_per_slot);
    alts
}

fn relation_alternatives(
    rel: &str,
    two_hop: &BTreeSet<String>,
    graph: &KnowledgeGraph,
    c: &RefinementConfig,
) -> Vec<(String, f64)> {
    let mut alts: Vec<(String, f64)> = Vec::new();
    if graph.has_relation(rel) {
        alts.push((rel.to_string(), 1.0));
    }
    let mut scored: Vec<(String, f64)> = two_hop
        .iter()
        .filter(|r| r.as_str() != rel)
        .map(|r| (r.clone(), (c.similarity)(rel, r)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    alts.extend(scored);
    alts.truncate(c.max_per_slot);
    alts
}

/// Substitutes similar graph entities and nearby relations into `form`, keeping its
/// operator tree. Candidates are ordered by the product of slot similarities; empty
/// when some entity mention has no label above the threshold.
pub fn refine(form: &SExpr, graph: &KnowledgeGraph, config: &RefinementConfig) -> Vec<SExpr> {
    let mut ent_slots: Vec<&EntityRef> = Vec::new();
    for e in form.entities() {
        if !ent_slots.contains(&e) {
            ent_slots.push(e);
        }
    }
    let mut rel_slots: Vec<&str> = Vec::new();
    for r in form.relations() {
        if !rel_slots.contains(&r) {
            rel_slots.push(r);
        }
    }
    let ent_alts: Vec<Vec<(EntityId, f64)>> = ent_slots
        .iter()
        .map(|e| entity_alternatives(e, graph, config))
        .collect();
    if ent_alts.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let e_sub: BTreeSet<&EntityId> = ent_alts.iter().flatten().map(|(id, _)| id).collect();
    let two_hop = two_hop_relations(graph, e_sub).unwrap_or_default();
    let rel_alts: Vec<Vec<(String, f64)>> = rel_slots
        .iter()
        .map(|r| relation_alternatives(r, &two_hop, graph, config))
        .collect();
    if rel_alts.iter().any(Vec::is_empty) {
        return Vec::new();
    }

    // k-best over the product, one slot at a time
    let slots: Vec<Vec<(String, f64)>> = ent_alts
        .into_iter()
        .map(|v| v.into_iter().map(|(id, s)| (id.to_string(), s)).collect())
        .chain(rel_alts)
        .collect();
    let mut combos: Vec<(f64, Vec<usize>)> = vec![(1.0, Vec::new())];
    for alts in &slots {
        let mut next = Vec::with_capacity(combos.len() * alts.len());
        for (s, picks) in &combos {
            for (i, (_, a)) in alts.iter().enumerate() {
                let mut p = picks.clone();
                p.push(i);
                next.push((s * a, p));
            }
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        next.truncate(config.max_candidates);
        combos = next;
    }

    let n_e = ent_slots.len();
    let mut out: Vec<(f64, String, SExpr)> = combos
        .into_iter()
        .map(|(s, picks)| {
            let f = form.map_slots(
                &mut |e| {
                    let i = ent_slots.iter().position(|x| *x == e).expect("known slot");
                    EntityRef::Id(EntityId::new(slots[i][picks[i]].0.as_str()).expect("graph id"))
                },
                &mut |r| {
                    let j = n_e + rel_slots.iter().position(|x| *x == r).expect("known slot");
                    slots[j][picks[j]].0.clone()
                },
            );
            (s, f.to_string(), f)
        })
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    out.dedup_by(|a, b| a.1 == b.1);
    out.into_iter().map(|x| x.2).collect()
}

/// What happened to one refined form during execution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub form: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionResult {
    pub answers: AnswerSet,
    #[serde(serialize_with = "opt_text")]
    pub chosen_form: Option<SExpr>,
    pub sparql: Option<String>,
    pub executable: bool,
    pub attempts: Vec<Attempt>,
}

fn opt_text<S: serde::Serializer>(e: &Option<SExpr>, s: S) -> Result<S::Ok, S::Error> {
    match e {
        Some(f) => s.serialize_some(&f.to_string()),
        None => s.serialize_none(),
    }
}

impl ExecutionResult {
    pub fn failed(attempts: Vec<Attempt>) -> Self {
        ExecutionResult {
            answers: AnswerSet::empty(),
            chosen_form: None,
            sparql: None,
            executable: false,
            attempts,
        }
    }
}

/// Walks the beam in order, refining each candidate lazily; the first refinement that
/// evaluates without error to a non-empty answer wins.
pub fn execute_beam(candidates: &[Candidate], graph: &KnowledgeGraph, config: &RefinementConfig) -> ExecutionResult {
    let mut attempts = Vec::new();
    for c in candidates {
        let refined = refine(&c.form, graph, config);
        if refined.is_empty() {
            attempts.push(Attempt {
                form: c.printed(),
                outcome: "no refinement".into(),
            });
        }
        for f in refined {
            match evaluate(&f, graph) {
                Ok(ans) if !ans.is_empty() || config.allow_empty_answers => {
                    attempts.push(Attempt {
                        form: f.to_string(),
                        outcome: "ok".into(),
                    });
                    return ExecutionResult {
                        answers: ans,
                        sparql: compile_sparql(&f, graph).ok(),
                        chosen_form: Some(f),
                        executable: true,
                        attempts,
                    };
                }
                Ok(_) => attempts.push(Attempt {
                    form: f.to_string(),
                    outcome: "empty".into(),
                }),
                Err(e) => attempts.push(Attempt {
                    form: f.to_string(),
                    outcome: format!("error: {e}"),
                }),
            }
        }
    }
    ExecutionResult::failed(attempts)
}
