//! Brute-force evaluator: linear scans over the triple list, no indexes.

use std::cmp::Ordering;

use kgqa_core::kg::{KnowledgeGraph, Literal, LiteralKind, Value};
use kgqa_core::sexpr::{AnswerSet, CompareOp, EntityRef, SExpr};

fn insert(set: &mut Vec<Value>, v: Value) {
    if !set.contains(&v) {
        set.push(v);
    }
}

fn to_answer(set: Vec<Value>) -> AnswerSet {
    AnswerSet::Values(set.into_iter().collect())
}

fn values(a: AnswerSet) -> Vec<Value> {
    match a {
        AnswerSet::Values(v) => v.into_iter().collect(),
        AnswerSet::Count(n) => vec![Value::Literal(Literal::number(n as f64))],
    }
}

fn exists(g: &KnowledgeGraph, id: &str) -> bool {
    g.triples()
        .iter()
        .any(|t| t.head.as_str() == id || matches!(&t.tail, Value::Entity(e) if e.as_str() == id))
        || g.entities().any(|(e, _)| e.as_str() == id)
}

fn compare(a: &Literal, b: &Literal) -> Result<Ordering, ()> {
    match (a.kind(), b.kind()) {
        (LiteralKind::Number, LiteralKind::Number) => {
            let x: f64 = a.value().parse().map_err(|_| ())?;
            let y: f64 = b.value().parse().map_err(|_| ())?;
            x.partial_cmp(&y).ok_or(())
        }
        (LiteralKind::Date, LiteralKind::Date) => Ok(a.value().cmp(b.value())),
        _ => Err(()),
    }
}

fn holds(op: CompareOp, o: Ordering) -> bool {
    match op {
        CompareOp::Gt => o == Ordering::Greater,
        CompareOp::Ge => o != Ordering::Less,
        CompareOp::Lt => o == Ordering::Less,
        CompareOp::Le => o != Ordering::Greater,
    }
}

/// Members of `members` whose `relation` value is extreme; errors on non-orderable values.
pub fn arg_extreme(g: &KnowledgeGraph, members: &[Value], relation: &str, max: bool) -> Result<Vec<Value>, ()> {
    let mut pairs: Vec<(Value, Literal)> = Vec::new();
    for m in members {
        let Value::Entity(e) = m else { continue };
        for t in g.triples() {
            if &t.head == e && t.relation == relation {
                match &t.tail {
                    Value::Literal(l) if l.kind() != LiteralKind::String => pairs.push((m.clone(), l.clone())),
                    _ => return Err(()),
                }
            }
        }
    }
    if let Some(first) = pairs.first() {
        if pairs.iter().any(|p| p.1.kind() != first.1.kind()) {
            return Err(());
        }
    }
    let mut out = Vec::new();
    for (m, l) in &pairs {
        let extreme = pairs.iter().all(|(_, o)| {
            let c = compare(l, o).unwrap();
            if max {
                c != Ordering::Less
            } else {
                c != Ordering::Greater
            }
        });
        if extreme {
            insert(&mut out, m.clone());
        }
    }
    Ok(out)
}

/// `Err(())` wherever a typed evaluator must fail.
pub fn brute_eval(e: &SExpr, g: &KnowledgeGraph) -> Result<AnswerSet, ()> {
    Ok(match e {
        SExpr::Entity(EntityRef::Id(id)) => {
            if !exists(g, id.as_str()) {
                return Err(());
            }
            to_answer(vec![Value::Entity(id.clone())])
        }
        SExpr::Entity(EntityRef::Label(l)) => {
            let hits: Vec<_> = g.entities().filter(|(_, lab)| lab == l).collect();
            if hits.len() != 1 {
                return Err(());
            }
            to_answer(vec![Value::Entity(hits[0].0.clone())])
        }
        SExpr::Literal(l) => to_answer(vec![Value::Literal(l.clone())]),
        SExpr::Join {
            relation,
            inverse,
            operand,
        } => {
            let inner = values(brute_eval(operand, g)?);
            let mut out = Vec::new();
            for t in g.triples() {
                if &t.relation != relation {
                    continue;
                }
                if *inverse {
                    if inner.contains(&Value::Entity(t.head.clone())) {
                        insert(&mut out, t.tail.clone());
                    }
                } else if inner.contains(&t.tail) {
                    insert(&mut out, Value::Entity(t.head.clone()));
                }
            }
            to_answer(out)
        }
        SExpr::And(a, b) => {
            let a = values(brute_eval(a, g)?);
            let b = values(brute_eval(b, g)?);
            to_answer(a.into_iter().filter(|x| b.contains(x)).collect())
        }
        SExpr::Count(a) => AnswerSet::Count(values(brute_eval(a, g)?).len() as u64),
        SExpr::ArgMax(a, r) => to_answer(arg_extreme(g, &values(brute_eval(a, g)?), r, true)?),
        SExpr::ArgMin(a, r) => to_answer(arg_extreme(g, &values(brute_eval(a, g)?), r, false)?),
        SExpr::Compare(op, a, lit) => {
            let mut out = Vec::new();
            for m in values(brute_eval(a, g)?) {
                let Value::Literal(l) = &m else { return Err(()) };
                if holds(*op, compare(l, lit)?) {
                    insert(&mut out, m.clone());
                }
            }
            to_answer(out)
        }
    })
}
