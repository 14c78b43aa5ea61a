//! Compilation of logical forms into SPARQL text over the `ns:` Freebase namespace.
//!
//! Output is already normalized: one clause per line, single spaces, `\n` line ends,
//! no trailing blanks. Topic-entity inequality filters and the language filter come
//! first in the WHERE block, followed by triple patterns. Inside an `AND`, branches
//! anchored on a literal are emitted after entity-anchored ones.

pub mod interp;

use thiserror::Error;

use super::eval::{resolve_entity, EvalError};
use super::{SExpr};
use crate::kg::{EntityId, KnowledgeGraph, Literal, LiteralKind};

pub const NS_IRI: &str = "http://rdf.freebase.com/ns/";
pub const XSD_IRI: &str = "http://www.w3.org/2001/XMLSchema#";
const LANG_FILTER: &str = "FILTER (!isLiteral(?x) OR lang(?x) = '' OR langMatches(lang(?x), 'en'))";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Entity(#[from] EvalError),
    #[error("{0} is only supported at the root of a compiled query")]
    NestedAggregate(&'static str),
    #[error("literal `{0}` cannot be the subject of a triple pattern")]
    LiteralSubject(String),
}

/// Collapses whitespace runs, trims lines and drops blank ones; `\n` line ends.
pub fn normalize_sparql(text: &str) -> String {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

struct Compiler<'g> {
    graph: &'g KnowledgeGraph,
    topics: Vec<EntityId>,
    next_var: usize,
    next_sk: usize,
    uses_xsd: bool,
}

fn string_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

impl Compiler<'_> {
    fn literal_term(&mut self, l: &Literal) -> String {
        match l.kind() {
            LiteralKind::String => string_literal(l.value()),
            LiteralKind::Number => l.value().to_string(),
            LiteralKind::Date => {
                self.uses_xsd = true;
                format!("{}^^xsd:date", string_literal(l.value()))
            }
        }
    }

    fn fresh_var(&mut self) -> String {
        let v = format!("?y{}", self.next_var);
        self.next_var += 1;
        v
    }

    fn fresh_sk(&mut self) -> String {
        let v = format!("?sk{}", self.next_sk);
        self.next_sk += 1;
        v
    }

    fn entity(&mut self, e: &super::EntityRef, topic: bool) -> Result<String, CompileError> {
        let id = resolve_entity(e, self.graph)?;
        if topic && !self.topics.contains(&id) {
            self.topics.push(id.clone());
        }
        Ok(format!("ns:{id}"))
    }

    /// Emits clauses binding `var` to the members of `expr`.
    fn set(&mut self, expr: &SExpr, var: &str, out: &mut Vec<String>) -> Result<(), CompileError> {
        match expr {
            SExpr::Entity(e) => {
                let term = self.entity(e, false)?;
                out.push(format!("VALUES {var} {{ {term} }}"));
            }
            SExpr::Literal(l) => {
                let term = self.literal_term(l);
                out.push(format!("VALUES {var} {{ {term} }}"));
            }
            SExpr::Join {
                relation,
                inverse: true,
                operand,
            } => match operand.as_ref() {
                SExpr::Entity(e) => {
                    let term = self.entity(e, true)?;
                    out.push(format!("{term} ns:{relation} {var} ."));
                }
                SExpr::Literal(l) => return Err(CompileError::LiteralSubject(l.value().to_string())),
                other => {
                    let y = self.fresh_var();
                    self.set(other, &y, out)?;
                    out.push(format!("{y} ns:{relation} {var} ."));
                }
            },
            SExpr::Join {
                relation,
                inverse: false,
                operand,
            } => match operand.as_ref() {
                SExpr::Entity(e) => {
                    let term = self.entity(e, true)?;
                    out.push(format!("{var} ns:{relation} {term} ."));
                }
                SExpr::Literal(l) => {
                    let sk = self.fresh_sk();
                    out.push(format!("{var} ns:{relation} {sk} ."));
                    out.push(match l.kind() {
                        LiteralKind::String => format!("FILTER (str({sk}) = {})", string_literal(l.value())),
                        _ => format!("FILTER ({sk} = {})", self.literal_term(l)),
                    });
                }
                other => {
                    let y = self.fresh_var();
                    self.set(other, &y, out)?;
                    out.push(format!("{var} ns:{relation} {y} ."));
                }
            },
            SExpr::And(a, b) => {
                let (first, second) = if literal_anchored(a) && !literal_anchored(b) {
                    (b, a)
                } else {
                    (a, b)
                };
                self.set(first, var, out)?;
                self.set(second, var, out)?;
            }
            SExpr::Compare(op, a, l) => {
                self.set(a, var, out)?;
                let term = self.literal_term(l);
                out.push(format!("FILTER ({var} {} {term})", op.sparql_op()));
            }
            SExpr::Count(_) => return Err(CompileError::NestedAggregate("COUNT")),
            SExpr::ArgMax(..) => return Err(CompileError::NestedAggregate("ARGMAX")),
            SExpr::ArgMin(..) => return Err(CompileError::NestedAggregate("ARGMIN")),
        }
        Ok(())
    }

    fn filters(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .topics
            .iter()
            .map(|t| format!("FILTER (?x != ns:{t})"))
            .collect();
        out.push(LANG_FILTER.to_string());
        out
    }
}

fn literal_anchored(e: &SExpr) -> bool {
    matches!(e, SExpr::Join { inverse: false, operand, .. } if matches!(operand.as_ref(), SExpr::Literal(_)))
}

/// Compiles a logical form to SPARQL. `COUNT` at the root becomes a `COUNT(DISTINCT ?x)`
/// projection and `ARGMAX`/`ARGMIN` at the root a `MAX`/`MIN` sub-select; elsewhere they
/// are rejected.
pub fn compile_sparql(expr: &SExpr, graph: &KnowledgeGraph) -> Result<String, CompileError> {
    let mut c = Compiler {
        graph,
        topics: Vec::new(),
        next_var: 0,
        next_sk: 0,
        uses_xsd: false,
    };
    let mut body = Vec::new();
    let select;
    match expr {
        SExpr::Count(a) => {
            c.set(a, "?x", &mut body)?;
            select = "SELECT (COUNT(DISTINCT ?x) AS ?count)".to_string();
        }
        SExpr::ArgMax(a, r) | SExpr::ArgMin(a, r) => {
            c.set(a, "?x", &mut body)?;
            let sk = c.fresh_sk();
            body.push(format!("?x ns:{r} {sk} ."));
            let agg = if matches!(expr, SExpr::ArgMax(..)) { "MAX" } else { "MIN" };
            let mut inner = vec![
                "{".to_string(),
                format!("SELECT ({agg}({sk}) AS ?extreme)"),
                "WHERE".to_string(),
                "{".to_string(),
            ];
            inner.extend(c.filters());
            inner.extend(body.iter().cloned());
            inner.push("}".into());
            inner.push("}".into());
            inner.append(&mut body);
            inner.push(format!("FILTER ({sk} = ?extreme)"));
            body = inner;
            select = "SELECT DISTINCT ?x".to_string();
        }
        _ => {
            c.set(expr, "?x", &mut body)?;
            select = "SELECT DISTINCT ?x".to_string();
        }
    }
    let mut lines = vec![format!("PREFIX ns: <{NS_IRI}>")];
    if c.uses_xsd {
        lines.push(format!("PREFIX xsd: <{XSD_IRI}>"));
    }
    lines.push(select);
    lines.push("WHERE".into());
    lines.push("{".into());
    lines.extend(c.filters());
    lines.extend(body);
    lines.push("}".into());
    Ok(lines.join("\n"))
}
