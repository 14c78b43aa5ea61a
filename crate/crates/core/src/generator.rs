//! Candidate logical-form generation from skeleton templates.
//!
//! A skeleton is a training form with entities renamed `E1..En` and relations `R1..Rm`
//! in order of first appearance. Generation fills the slots with retrieved items and
//! scores each binding by `Σ log gate + log(frequency / total frequency)`.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::gating::GateScores;
use crate::kg::EntityId;
use crate::retrieval::{RetrievalBundle, ScoredItem};
use crate::sexpr::{parse, EntityRef, ParseError, SExpr};

/// Complete bindings examined per skeleton before enumeration stops.
pub const MAX_BINDINGS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skeleton {
    #[serde(serialize_with = "crate::generator::as_text")]
    pub template: SExpr,
    pub frequency: u64,
    pub entity_slots: usize,
    pub relation_slots: usize,
}

pub(crate) fn as_text<S: serde::Serializer>(e: &SExpr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

fn entity_slot(i: usize) -> String {
    format!("E{i}")
}

fn relation_slot(i: usize) -> String {
    format!("R{i}")
}

/// Anonymizes one form; returns the template and its slot counts.
pub fn anonymize(form: &SExpr) -> (SExpr, usize, usize) {
    let mut ents: HashMap<EntityRef, usize> = HashMap::new();
    let mut rels: HashMap<String, usize> = HashMap::new();
    let t = form.map_slots(
        &mut |e| {
            let n = ents.len() + 1;
            EntityRef::Label(entity_slot(*ents.entry(e.clone()).or_insert(n)))
        },
        &mut |r| {
            let n = rels.len() + 1;
            relation_slot(*rels.entry(r.to_string()).or_insert(n))
        },
    );
    (t, ents.len(), rels.len())
}

/// Distinct skeletons with summed frequencies, most frequent first (ties by printed form).
pub fn extract_skeletons<'a>(forms: impl IntoIterator<Item = &'a SExpr>) -> Vec<Skeleton> {
    let mut acc: BTreeMap<String, Skeleton> = BTreeMap::new();
    for f in forms {
        let (template, entity_slots, relation_slots) = anonymize(f);
        acc.entry(template.to_string())
            .or_insert(Skeleton {
                template,
                frequency: 0,
                entity_slots,
                relation_slots,
            })
            .frequency += 1;
    }
    let mut out: Vec<Skeleton> = acc.into_values().collect();
    out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.template.cmp(&b.template)));
    out
}

/// A generated form with its log-domain score and slot bindings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    #[serde(serialize_with = "crate::generator::as_text")]
    pub form: SExpr,
    pub score: f64,
    /// (slot, bound id) pairs
    pub bindings: Vec<(String, String)>,
}

impl Candidate {
    pub fn printed(&self) -> String {
        self.form.to_string()
    }
}

/// Descending score, then printed form.
fn beam_order(a: &(f64, String, Candidate), b: &(f64, String, Candidate)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

struct Beam {
    n: usize,
    items: Vec<(f64, String, Candidate)>,
}

impl Beam {
    fn floor(&self) -> f64 {
        if self.items.len() < self.n {
            f64::NEG_INFINITY
        } else {
            self.items[self.n - 1].0
        }
    }

    fn offer(&mut self, c: Candidate) {
        if c.score < self.floor() {
            return;
        }
        let key = c.printed();
        if self.items.iter().any(|i| i.1 == key) {
            return;
        }
        self.items.push((c.score, key, c));
        self.items.sort_by(beam_order);
        self.items.truncate(self.n);
    }
}

/// (id, log gate) of usable items, best gate first; padding and id-less items dropped.
fn ranked(items: &[ScoredItem], gates: &[f64]) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = items
        .iter()
        .zip(gates)
        .filter(|(it, _)| !it.is_padding())
        .filter_map(|(it, &g)| it.id.clone().map(|id| (id, g.ln())))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

struct Search<'a> {
    ents: &'a [(String, f64)],
    rels: &'a [(String, f64)],
    n_e: usize,
    n_r: usize,
    chosen: Vec<usize>,
    visited: usize,
}

impl Search<'_> {
    /// Depth-first over entity slots then relation slots with distinct items per kind.
    fn run(&mut self, prior: f64, partial: f64, sk: &Skeleton, beam: &mut Beam) {
        if self.visited >= MAX_BINDINGS || partial + prior < beam.floor() {
            return;
        }
        let depth = self.chosen.len();
        if depth == self.n_e + self.n_r {
            self.visited += 1;
            beam.offer(self.instantiate(sk, prior + partial));
            return;
        }
        let (pool, lo) = if depth < self.n_e {
            (self.ents, 0)
        } else {
            (self.rels, self.n_e)
        };
        for (i, item) in pool.iter().enumerate() {
            if self.chosen[lo..].contains(&i) {
                continue;
            }
            self.chosen.push(i);
            self.run(prior, partial + item.1, sk, beam);
            self.chosen.pop();
        }
    }

    fn instantiate(&self, sk: &Skeleton, score: f64) -> Candidate {
        let ent = |slot: usize| &self.ents[self.chosen[slot]].0;
        let rel = |slot: usize| &self.rels[self.chosen[self.n_e + slot]].0;
        let mut bindings = Vec::new();
        for s in 0..self.n_e {
            bindings.push((entity_slot(s + 1), ent(s).clone()));
        }
        for s in 0..self.n_r {
            bindings.push((relation_slot(s + 1), rel(s).clone()));
        }
        let form = sk.template.map_slots(
            &mut |e| {
                let n: usize = e.text()[1..].parse().expect("entity slot");
                EntityRef::Id(EntityId::new(ent(n - 1).as_str()).expect("nonempty id"))
            },
            &mut |r| {
                let n: usize = r[1..].parse().expect("relation slot");
                rel(n - 1).clone()
            },
        );
        Candidate { form, score, bindings }
    }
}

/// Top `beam_n` instantiations over all skeletons. Skeletons needing more entities or
/// relations than retrieved are skipped; an empty result means nothing fits.
pub fn generate(bundle: &RetrievalBundle, gates: &GateScores, skeletons: &[Skeleton], beam_n: usize) -> Vec<Candidate> {
    let beam_n = beam_n.max(1);
    let ents = ranked(&bundle.entities, &gates.entities);
    let rels = ranked(&bundle.relations, &gates.relations);
    let total: u64 = skeletons.iter().map(|s| s.frequency).sum();
    let mut beam = Beam {
        n: beam_n,
        items: Vec::new(),
    };
    for sk in skeletons {
        if sk.entity_slots > ents.len() || sk.relation_slots > rels.len() || sk.frequency == 0 {
            continue;
        }
        let prior = (sk.frequency as f64 / total as f64).ln();
        let mut s = Search {
            ents: &ents,
            rels: &rels,
            n_e: sk.entity_slots,
            n_r: sk.relation_slots,
            chosen: Vec::new(),
            visited: 0,
        };
        s.run(prior, 0.0, sk, &mut beam);
    }
    beam.items.into_iter().map(|i| i.2).collect()
}

/// Emits the gold form alone with score 0.
pub fn oracle_generate(gold_sexpr: &str) -> Result<Vec<Candidate>, ParseError> {
    Ok(vec![Candidate {
        form: parse(gold_sexpr)?,
        score: 0.0,
        bindings: Vec::new(),
    }])
}

/// Plug-in boundary between gated retrieval and execution.
pub trait CandidateGenerator: Sync {
    fn candidates(&self, question: &str, bundle: &RetrievalBundle, gates: &GateScores, beam_n: usize) -> Vec<Candidate>;
}

/// Skeleton enumeration (see [`generate`]).
#[derive(Debug, Clone, Default)]
pub struct SkeletonGenerator {
    pub skeletons: Vec<Skeleton>,
}

impl CandidateGenerator for SkeletonGenerator {
    fn candidates(&self, _question: &str, bundle: &RetrievalBundle, gates: &GateScores, beam_n: usize) -> Vec<Candidate> {
        generate(bundle, gates, &self.skeletons, beam_n)
    }
}

/// Looks the question up in a table of gold forms.
#[derive(Debug, Clone, Default)]
pub struct OracleGenerator {
    pub gold: HashMap<String, String>,
}

impl CandidateGenerator for OracleGenerator {
    fn candidates(&self, question: &str, _: &RetrievalBundle, _: &GateScores, _: usize) -> Vec<Candidate> {
        self.gold
            .get(question)
            .and_then(|g| oracle_generate(g).ok())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anonymizes_in_order() {
        let f = parse("(AND (JOIN r1 \"Country\") (JOIN (R r2) e1))").unwrap();
        let sk = extract_skeletons([&f]);
        assert_eq!(sk.len(), 1);
        assert_eq!(sk[0].template.to_string(), "(AND (JOIN R1 \"Country\") (JOIN (R R2) E1))");
        assert_eq!((sk[0].entity_slots, sk[0].relation_slots), (1, 2));
    }

    #[test]
    fn alpha_equivalent_forms_merge() {
        let a = parse("(JOIN (R x.y) m.1)").unwrap();
        let b = parse("(JOIN (R p.q) m.2)").unwrap();
        let sk = extract_skeletons([&a, &b]);
        assert_eq!(sk.len(), 1);
        assert_eq!(sk[0].frequency, 2);
        assert!(extract_skeletons(std::iter::empty()).is_empty());
    }

    #[test]
    fn argmax_relation_numbered_after_operand() {
        let f = parse("(ARGMAX (JOIN (R a) m.1) b)").unwrap();
        assert_eq!(anonymize(&f).0.to_string(), "(ARGMAX (JOIN (R R1) E1) R2)");
    }

    #[test]
    fn oracle_is_singleton() {
        let c = oracle_generate("(JOIN (R r)   m.1)").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].printed(), "(JOIN (R r) m.1)");
    }
}
