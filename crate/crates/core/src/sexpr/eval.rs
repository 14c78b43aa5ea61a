use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use super::{EntityRef, SExpr};
use crate::kg::{EntityId, KnowledgeGraph, Literal, LiteralKind, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("no entity labelled `{0}`")]
    Unresolvable(String),
    #[error("label `{label}` is ambiguous: {candidates:?}")]
    Ambiguous { label: String, candidates: Vec<String> },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Entities,
    Literals,
    Mixed,
    Count,
}

/// Result of executing a logical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerSet {
    Values(BTreeSet<Value>),
    Count(u64),
}

impl AnswerSet {
    pub fn empty() -> Self {
        AnswerSet::Values(BTreeSet::new())
    }

    pub fn kind(&self) -> AnswerKind {
        match self {
            AnswerSet::Count(_) => AnswerKind::Count,
            AnswerSet::Values(v) => {
                let ents = v.iter().filter(|x| x.as_entity().is_some()).count();
                if ents == v.len() {
                    AnswerKind::Entities
                } else if ents == 0 {
                    AnswerKind::Literals
                } else {
                    AnswerKind::Mixed
                }
            }
        }
    }

    /// A count of zero is treated as no answer.
    pub fn is_empty(&self) -> bool {
        match self {
            AnswerSet::Values(v) => v.is_empty(),
            AnswerSet::Count(n) => *n == 0,
        }
    }

    /// Members as a value set; a count becomes a single number literal.
    pub fn into_values(self) -> BTreeSet<Value> {
        match self {
            AnswerSet::Values(v) => v,
            AnswerSet::Count(n) => BTreeSet::from([Value::Literal(Literal::number(n as f64))]),
        }
    }

    /// Canonical answer strings (entity ids, literal text, or the count), sorted.
    pub fn canonical(&self) -> Vec<String> {
        match self {
            AnswerSet::Values(v) => {
                let mut out: Vec<String> = v.iter().map(|x| x.canonical().to_string()).collect();
                out.sort();
                out
            }
            AnswerSet::Count(n) => vec![n.to_string()],
        }
    }
}

impl Serialize for AnswerSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.canonical().serialize(s)
    }
}

/// Resolves an entity reference: ids must exist, labels must match exactly one entity.
pub fn resolve_entity(r: &EntityRef, graph: &KnowledgeGraph) -> Result<EntityId, EvalError> {
    match r {
        EntityRef::Id(id) => {
            if graph.contains_entity(id) {
                Ok(id.clone())
            } else {
                Err(EvalError::UnknownEntity(id.to_string()))
            }
        }
        EntityRef::Label(l) => match graph.resolve_label(l) {
            [] => Err(EvalError::Unresolvable(l.clone())),
            [one] => Ok(one.clone()),
            many => Err(EvalError::Ambiguous {
                label: l.clone(),
                candidates: many.iter().map(|e| e.to_string()).collect(),
            }),
        },
    }
}

/// Evaluates a logical form with set semantics over the graph indexes.
pub fn evaluate(expr: &SExpr, graph: &KnowledgeGraph) -> Result<AnswerSet, EvalError> {
    Ok(match expr {
        SExpr::Entity(r) => AnswerSet::Values(BTreeSet::from([Value::Entity(resolve_entity(r, graph)?)])),
        SExpr::Literal(l) => AnswerSet::Values(BTreeSet::from([Value::Literal(l.clone())])),
        SExpr::Join {
            relation,
            inverse,
            operand,
        } => {
            let inner = evaluate(operand, graph)?.into_values();
            let mut out = BTreeSet::new();
            if *inverse {
                for v in &inner {
                    if let Value::Entity(h) = v {
                        out.extend(
                            graph
                                .with_head(h)
                                .filter(|t| &t.relation == relation)
                                .map(|t| t.tail.clone()),
                        );
                    }
                }
            } else {
                for v in &inner {
                    out.extend(
                        graph
                            .with_tail(v)
                            .filter(|t| &t.relation == relation)
                            .map(|t| Value::Entity(t.head.clone())),
                    );
                }
            }
            AnswerSet::Values(out)
        }
        SExpr::And(a, b) => {
            let a = evaluate(a, graph)?.into_values();
            let b = evaluate(b, graph)?.into_values();
            AnswerSet::Values(a.intersection(&b).cloned().collect())
        }
        SExpr::Count(a) => AnswerSet::Count(evaluate(a, graph)?.into_values().len() as u64),
        SExpr::ArgMax(a, r) => arg_extreme(a, r, graph, Ordering::Greater)?,
        SExpr::ArgMin(a, r) => arg_extreme(a, r, graph, Ordering::Less)?,
        SExpr::Compare(op, a, lit) => {
            let members = evaluate(a, graph)?.into_values();
            let mut out = BTreeSet::new();
            for m in members {
                let l = match &m {
                    Value::Literal(l) => l,
                    Value::Entity(e) => {
                        return Err(EvalError::TypeMismatch(format!(
                            "{} compares literals, found entity {e}",
                            op.keyword()
                        )))
                    }
                };
                if op.holds(compare_literals(l, lit)?) {
                    out.insert(m);
                }
            }
            AnswerSet::Values(out)
        }
    })
}

/// Orders two literals of the same comparable kind. Numbers compare numerically,
/// dates as ISO-8601 text; strings are rejected.
pub fn compare_literals(a: &Literal, b: &Literal) -> Result<Ordering, EvalError> {
    match (a.kind(), b.kind()) {
        (LiteralKind::Number, LiteralKind::Number) => {
            let x = a.as_number().unwrap_or(f64::NAN);
            let y = b.as_number().unwrap_or(f64::NAN);
            x.partial_cmp(&y)
                .ok_or_else(|| EvalError::TypeMismatch("unordered numbers".into()))
        }
        (LiteralKind::Date, LiteralKind::Date) => Ok(a.value().cmp(b.value())),
        (x, y) => Err(EvalError::TypeMismatch(format!(
            "cannot compare {} with {}",
            x.name(),
            y.name()
        ))),
    }
}

fn arg_extreme(a: &SExpr, relation: &str, graph: &KnowledgeGraph, want: Ordering) -> Result<AnswerSet, EvalError> {
    let members = evaluate(a, graph)?.into_values();
    let mut projected: Vec<(&Value, &Literal)> = Vec::new();
    for m in &members {
        let Value::Entity(e) = m else { continue };
        for t in graph.with_head(e).filter(|t| t.relation == relation) {
            match &t.tail {
                Value::Literal(l) if l.kind() != LiteralKind::String => projected.push((m, l)),
                other => {
                    return Err(EvalError::TypeMismatch(format!(
                        "ARG over `{relation}` needs number or date values, found `{other}`"
                    )))
                }
            }
        }
    }
    let mut best: Option<&Literal> = None;
    for (_, l) in &projected {
        best = match best {
            None => Some(l),
            Some(b) => {
                if compare_literals(l, b)? == want {
                    Some(l)
                } else {
                    Some(b)
                }
            }
        };
    }
    let Some(best) = best else {
        return Ok(AnswerSet::empty());
    };
    let mut out = BTreeSet::new();
    for (m, l) in projected {
        if compare_literals(l, best)? == Ordering::Equal {
            out.insert(m.clone());
        }
    }
    Ok(AnswerSet::Values(out))
}
