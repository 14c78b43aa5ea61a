//! S-expression logical forms: AST, parser, canonical printer, set-semantics evaluator
//! and SPARQL compilation.
//!
//! Operator catalog:
//!
//! | form               | meaning                                                    |
//! |--------------------|------------------------------------------------------------|
//! | `(JOIN r t)`       | `{h : (h, r, t)}` for every `t` in the operand             |
//! | `(JOIN (R r) h)`   | `{t : (h, r, t)}` for every `h` in the operand             |
//! | `(AND a b)`        | intersection                                               |
//! | `(COUNT a)`        | cardinality                                                |
//! | `(ARGMAX a r)`     | members of `a` whose `r` value is maximal (`ARGMIN` alike) |
//! | `(GT a l)` etc.    | members of `a` (literals) comparing against `l`            |

mod eval;
mod parse;
pub mod sparql;

use std::fmt;

use crate::kg::{EntityId, Literal, LiteralKind};

pub use eval::{evaluate, resolve_entity, AnswerKind, AnswerSet, EvalError};
pub use parse::{parse, ParseError};
pub use sparql::{compile_sparql, normalize_sparql, CompileError};

/// Reference to an entity: by machine id or by display label (resolved at evaluation).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityRef {
    Id(EntityId),
    Label(String),
}

impl EntityRef {
    /// Classifies an atom: MID-shaped tokens are ids, anything else a label.
    pub fn from_atom(atom: &str) -> Self {
        if EntityId::looks_like_mid(atom) {
            EntityRef::Id(EntityId::new(atom).expect("nonempty mid"))
        } else {
            EntityRef::Label(atom.to_string())
        }
    }

    pub fn text(&self) -> &str {
        match self {
            EntityRef::Id(id) => id.as_str(),
            EntityRef::Label(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompareOp {
    Gt,
    Ge,
    Lt,
    Le,
}

impl CompareOp {
    pub fn keyword(self) -> &'static str {
        match self {
            CompareOp::Gt => "GT",
            CompareOp::Ge => "GE",
            CompareOp::Lt => "LT",
            CompareOp::Le => "LE",
        }
    }

    pub fn sparql_op(self) -> &'static str {
        match self {
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SExpr {
    Entity(EntityRef),
    Literal(Literal),
    Join {
        relation: String,
        /// `(JOIN (R r) h)`: follow the relation from head to tail.
        inverse: bool,
        operand: Box<SExpr>,
    },
    And(Box<SExpr>, Box<SExpr>),
    Count(Box<SExpr>),
    ArgMax(Box<SExpr>, String),
    ArgMin(Box<SExpr>, String),
    Compare(CompareOp, Box<SExpr>, Literal),
}

impl SExpr {
    pub fn id(id: &str) -> SExpr {
        SExpr::Entity(EntityRef::from_atom(id))
    }

    pub fn label(label: &str) -> SExpr {
        SExpr::Entity(EntityRef::Label(label.to_string()))
    }

    pub fn join(relation: &str, operand: SExpr) -> SExpr {
        SExpr::Join {
            relation: relation.to_string(),
            inverse: false,
            operand: Box::new(operand),
        }
    }

    pub fn join_rev(relation: &str, operand: SExpr) -> SExpr {
        SExpr::Join {
            relation: relation.to_string(),
            inverse: true,
            operand: Box::new(operand),
        }
    }

    pub fn and(a: SExpr, b: SExpr) -> SExpr {
        SExpr::And(Box::new(a), Box::new(b))
    }

    pub fn count(a: SExpr) -> SExpr {
        SExpr::Count(Box::new(a))
    }

    pub fn depth(&self) -> usize {
        match self {
            SExpr::Entity(_) | SExpr::Literal(_) => 0,
            SExpr::Join { operand, .. } => 1 + operand.depth(),
            SExpr::And(a, b) => 1 + a.depth().max(b.depth()),
            SExpr::Count(a) | SExpr::ArgMax(a, _) | SExpr::ArgMin(a, _) | SExpr::Compare(_, a, _) => {
                1 + a.depth()
            }
        }
    }

    /// Entity references in left-to-right order of appearance.
    pub fn entities(&self) -> Vec<&EntityRef> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let SExpr::Entity(r) = e {
                out.push(r);
            }
        });
        out
    }

    /// Relations in left-to-right order of appearance (including ARGMAX/ARGMIN relations).
    pub fn relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.relations_into(&mut out);
        out
    }

    fn relations_into<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            SExpr::Entity(_) | SExpr::Literal(_) => {}
            SExpr::Join { relation, operand, .. } => {
                out.push(relation);
                operand.relations_into(out);
            }
            SExpr::And(a, b) => {
                a.relations_into(out);
                b.relations_into(out);
            }
            SExpr::Count(a) | SExpr::Compare(_, a, _) => a.relations_into(out),
            SExpr::ArgMax(a, r) | SExpr::ArgMin(a, r) => {
                a.relations_into(out);
                out.push(r);
            }
        }
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a SExpr)) {
        f(self);
        match self {
            SExpr::Entity(_) | SExpr::Literal(_) => {}
            SExpr::Join { operand, .. } => operand.visit(f),
            SExpr::And(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            SExpr::Count(a) | SExpr::ArgMax(a, _) | SExpr::ArgMin(a, _) | SExpr::Compare(_, a, _) => {
                a.visit(f)
            }
        }
    }

    /// Rebuilds the tree with entities and relations substituted; structure is preserved.
    /// Slots are visited in printed (left-to-right) order.
    pub fn map_slots(
        &self,
        ent: &mut impl FnMut(&EntityRef) -> EntityRef,
        rel: &mut impl FnMut(&str) -> String,
    ) -> SExpr {
        match self {
            SExpr::Entity(r) => SExpr::Entity(ent(r)),
            SExpr::Literal(l) => SExpr::Literal(l.clone()),
            SExpr::Join {
                relation,
                inverse,
                operand,
            } => {
                let relation = rel(relation);
                SExpr::Join {
                    relation,
                    inverse: *inverse,
                    operand: Box::new(operand.map_slots(ent, rel)),
                }
            }
            SExpr::And(a, b) => {
                let a = a.map_slots(ent, rel);
                SExpr::And(Box::new(a), Box::new(b.map_slots(ent, rel)))
            }
            SExpr::Count(a) => SExpr::Count(Box::new(a.map_slots(ent, rel))),
            SExpr::ArgMax(a, r) => {
                let a = a.map_slots(ent, rel);
                SExpr::ArgMax(Box::new(a), rel(r))
            }
            SExpr::ArgMin(a, r) => {
                let a = a.map_slots(ent, rel);
                SExpr::ArgMin(Box::new(a), rel(r))
            }
            SExpr::Compare(op, a, l) => SExpr::Compare(*op, Box::new(a.map_slots(ent, rel)), l.clone()),
        }
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, l: &Literal) -> fmt::Result {
    match l.kind() {
        LiteralKind::String => {
            f.write_str("\"")?;
            for c in l.value().chars() {
                if c == '"' || c == '\\' {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("\"")
        }
        LiteralKind::Number | LiteralKind::Date => f.write_str(l.value()),
    }
}

/// Canonical single-space surface form.
impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Entity(r) => f.write_str(r.text()),
            SExpr::Literal(l) => write_literal(f, l),
            SExpr::Join {
                relation,
                inverse,
                operand,
            } => {
                if *inverse {
                    write!(f, "(JOIN (R {relation}) {operand})")
                } else {
                    write!(f, "(JOIN {relation} {operand})")
                }
            }
            SExpr::And(a, b) => write!(f, "(AND {a} {b})"),
            SExpr::Count(a) => write!(f, "(COUNT {a})"),
            SExpr::ArgMax(a, r) => write!(f, "(ARGMAX {a} {r})"),
            SExpr::ArgMin(a, r) => write!(f, "(ARGMIN {a} {r})"),
            SExpr::Compare(op, a, l) => {
                write!(f, "({} {a} ", op.keyword())?;
                write_literal(f, l)?;
                f.write_str(")")
            }
        }
    }
}

/// Canonical printed form; same as `expr.to_string()`.
pub fn print(expr: &SExpr) -> String {
    expr.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const OCEANIA_FORM: &str = "(AND (JOIN base.biblioness.bibs_location.loc_type \"Country\") (JOIN (R location.location.contains) Oceania))";

    #[test]
    fn prints_preliminaries_example() {
        let e = SExpr::and(
            SExpr::join(
                "base.biblioness.bibs_location.loc_type",
                SExpr::Literal(Literal::string("Country")),
            ),
            SExpr::join_rev("location.location.contains", SExpr::label("Oceania")),
        );
        assert_eq!(print(&e), OCEANIA_FORM);
    }

    #[test]
    fn prints_count() {
        let e = SExpr::count(SExpr::join("r", SExpr::label("e")));
        assert_eq!(print(&e), "(COUNT (JOIN r e))");
    }

    #[test]
    fn escapes_quotes() {
        let e = SExpr::join("r", SExpr::Literal(Literal::string("say \"hi\"")));
        assert_eq!(print(&e), r#"(JOIN r "say \"hi\"")"#);
        assert_eq!(parse(&print(&e)).unwrap(), e);
    }

    #[test]
    fn collects_slots_in_order() {
        let e = parse(OCEANIA_FORM).unwrap();
        assert_eq!(
            e.relations(),
            vec!["base.biblioness.bibs_location.loc_type", "location.location.contains"]
        );
        assert_eq!(e.entities(), vec![&EntityRef::Label("Oceania".into())]);
        assert_eq!(e.depth(), 2);
    }
}
