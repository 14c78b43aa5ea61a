//! Seeded random graphs and well-typed random logical forms.

use kgqa_core::kg::{EntityId, GraphBuilder, KnowledgeGraph, Literal, LiteralKind, Triple, Value};
use kgqa_core::sexpr::{CompareOp, SExpr};
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Ent,
    Num,
    Date,
    Str,
}

impl Ty {
    fn of(v: &Value) -> Ty {
        match v {
            Value::Entity(_) => Ty::Ent,
            Value::Literal(l) => match l.kind() {
                LiteralKind::Number => Ty::Num,
                LiteralKind::Date => Ty::Date,
                LiteralKind::String => Ty::Str,
            },
        }
    }
}

/// Relations with their tail type, entity pool and literal constants.
#[derive(Debug, Clone)]
pub struct Schema {
    pub relations: Vec<(String, Ty)>,
    pub entities: Vec<String>,
    pub numbers: Vec<Literal>,
    pub dates: Vec<Literal>,
    pub strings: Vec<Literal>,
    /// COUNT/ARGMAX/ARGMIN only at the root
    pub root_aggregates_only: bool,
}

const DATES: [&str; 8] = [
    "1950-01-01", "1960-07-11", "1975-05-20", "1988-02-20", "1999-12-31", "2001-09-09", "2010-03-14", "2020-06-30",
];

/// Random graph over a fixed typed schema; at most `max_triples` triples.
pub fn random_graph<R: Rng>(rng: &mut R, max_triples: usize) -> (KnowledgeGraph, Schema) {
    let n_ent = rng.random_range(6..=25);
    let ents: Vec<String> = (0..n_ent).map(|i| format!("m.e{i}")).collect();
    let rels = [
        ("r.link.a", Ty::Ent),
        ("r.link.b", Ty::Ent),
        ("r.link.c", Ty::Ent),
        ("r.num.value", Ty::Num),
        ("r.date.value", Ty::Date),
        ("r.str.value", Ty::Str),
    ];
    let numbers: Vec<Literal> = (0..8).map(|i| Literal::number(i as f64 * 1.5)).collect();
    let dates: Vec<Literal> = DATES.iter().map(|d| Literal::date(d).unwrap()).collect();
    let strings: Vec<Literal> = ["alpha", "beta", "gamma"].iter().map(|s| Literal::string(*s)).collect();
    let mut b = GraphBuilder::new();
    let n = rng.random_range(1..=max_triples);
    let mut added = 0;
    while added < n {
        let h = ents.choose(rng).unwrap();
        let (r, ty) = *rels.choose(rng).unwrap();
        let tail = match ty {
            Ty::Ent => Value::entity(ents.choose(rng).unwrap()),
            Ty::Num => Value::Literal(numbers.choose(rng).unwrap().clone()),
            Ty::Date => Value::Literal(dates.choose(rng).unwrap().clone()),
            Ty::Str => Value::Literal(strings.choose(rng).unwrap().clone()),
        };
        b.add_triple(Triple::new(h, r, tail).unwrap());
        added += 1;
    }
    let g = b.build();
    let present: Vec<String> = ents
        .iter()
        .filter(|e| g.contains_entity(&EntityId::new(e.as_str()).unwrap()))
        .cloned()
        .collect();
    let schema = Schema {
        relations: rels.iter().map(|(r, t)| (r.to_string(), *t)).collect(),
        entities: present,
        numbers,
        dates,
        strings,
        root_aggregates_only: false,
    };
    (g, schema)
}

/// Schema read off an existing graph: a relation is typed by its first tail.
pub fn schema_of(g: &KnowledgeGraph) -> Schema {
    let mut relations = Vec::new();
    let (mut numbers, mut dates, mut strings) = (Vec::new(), Vec::new(), Vec::new());
    for r in g.relations() {
        let first = g.with_relation(r).next().unwrap();
        relations.push((r.to_string(), Ty::of(&first.tail)));
    }
    for t in g.triples() {
        if let Value::Literal(l) = &t.tail {
            let pool = match l.kind() {
                LiteralKind::Number => &mut numbers,
                LiteralKind::Date => &mut dates,
                LiteralKind::String => &mut strings,
            };
            if !pool.contains(l) {
                pool.push(l.clone());
            }
        }
    }
    let mut entities: Vec<String> = g
        .triples()
        .iter()
        .map(|t| t.head.to_string())
        .collect();
    entities.sort();
    entities.dedup();
    Schema {
        relations,
        entities,
        numbers,
        dates,
        strings,
        root_aggregates_only: true,
    }
}

impl Schema {
    fn rels(&self, ty: Ty) -> Vec<&str> {
        self.relations
            .iter()
            .filter(|(_, t)| *t == ty)
            .map(|(r, _)| r.as_str())
            .collect()
    }

    fn constant<R: Rng>(&self, rng: &mut R, ty: Ty) -> Option<SExpr> {
        let pool = match ty {
            Ty::Num => &self.numbers,
            Ty::Date => &self.dates,
            Ty::Str => &self.strings,
            Ty::Ent => return self.entities.choose(rng).map(|e| SExpr::id(e)),
        };
        pool.choose(rng).map(|l| SExpr::Literal(l.clone()))
    }

    /// Well-typed expression of result type `ty` and depth at most `depth`.
    pub fn gen<R: Rng>(&self, rng: &mut R, ty: Ty, depth: usize) -> Option<SExpr> {
        if depth == 0 {
            return self.constant(rng, ty);
        }
        let d = rng.random_range(0..depth);
        let nested_agg = !self.root_aggregates_only;
        for _ in 0..8 {
            let pick = rng.random_range(0..6);
            let e = match (ty, pick) {
                (_, 0) => self.constant(rng, ty),
                (Ty::Ent, 1) => {
                    let r = *self.rels(Ty::Ent).choose(rng)?;
                    let inner = self.gen(rng, Ty::Ent, d)?;
                    Some(if rng.random_bool(0.5) {
                        SExpr::join_rev(r, inner)
                    } else {
                        SExpr::join(r, inner)
                    })
                }
                (Ty::Ent, 2) => {
                    let lt = *[Ty::Num, Ty::Date, Ty::Str, Ty::Ent].choose(rng)?;
                    let r = *self.rels(lt).choose(rng)?;
                    Some(SExpr::join(r, self.gen(rng, lt, d)?))
                }
                (Ty::Ent, 3) if nested_agg => {
                    let lt = *[Ty::Num, Ty::Date].choose(rng)?;
                    let r = self.rels(lt).choose(rng)?.to_string();
                    let inner = Box::new(self.gen(rng, Ty::Ent, d)?);
                    Some(if rng.random_bool(0.5) {
                        SExpr::ArgMax(inner, r)
                    } else {
                        SExpr::ArgMin(inner, r)
                    })
                }
                (Ty::Num | Ty::Date | Ty::Str, 1) => {
                    let r = *self.rels(ty).choose(rng)?;
                    Some(SExpr::join_rev(r, self.gen(rng, Ty::Ent, d)?))
                }
                (Ty::Num | Ty::Date, 2) => {
                    let op = *[CompareOp::Gt, CompareOp::Ge, CompareOp::Lt, CompareOp::Le].choose(rng)?;
                    let lit = match self.constant(rng, ty)? {
                        SExpr::Literal(l) => l,
                        _ => unreachable!(),
                    };
                    Some(SExpr::Compare(op, Box::new(self.gen(rng, ty, d)?), lit))
                }
                (Ty::Num, 3) if nested_agg => Some(SExpr::count(self.gen(rng, Ty::Ent, d)?)),
                (_, 4) if depth >= 1 => {
                    let a = self.gen(rng, ty, d)?;
                    let db = rng.random_range(0..depth);
                    let b = self.gen(rng, ty, db)?;
                    Some(SExpr::and(a, b))
                }
                _ => None,
            };
            if e.is_some() {
                return e;
            }
        }
        self.constant(rng, ty)
    }

    /// Random root expression of depth ≤ `depth`, sometimes under a root aggregate.
    pub fn gen_root<R: Rng>(&self, rng: &mut R, depth: usize) -> SExpr {
        loop {
            let roll = rng.random_range(0..10);
            let e = if roll == 0 && depth > 0 {
                self.gen(rng, Ty::Ent, depth - 1).map(SExpr::count)
            } else if roll == 1 && depth > 0 {
                let r = self.rels(Ty::Num).first().map(|s| s.to_string());
                match (r, self.gen(rng, Ty::Ent, depth - 1)) {
                    (Some(r), Some(inner)) => Some(if rng.random_bool(0.5) {
                        SExpr::ArgMax(Box::new(inner), r)
                    } else {
                        SExpr::ArgMin(Box::new(inner), r)
                    }),
                    _ => None,
                }
            } else {
                let ty = *[Ty::Ent, Ty::Ent, Ty::Ent, Ty::Num, Ty::Date, Ty::Str].choose(rng).unwrap();
                self.gen(rng, ty, depth)
            };
            if let Some(e) = e {
                if e.depth() <= depth {
                    return e;
                }
            }
        }
    }
}
