//! Naive interpreter for the SPARQL subset emitted by [`super::compile_sparql`].
//!
//! Supports `PREFIX`, `SELECT DISTINCT ?v`, `SELECT (COUNT(DISTINCT ?v) AS ?c)`,
//! `{ SELECT (MAX|MIN(?v) AS ?w) WHERE {…} }` sub-selects, `VALUES`, basic triple
//! patterns and `FILTER` expressions built from `= != < <= > >=`, `!`, `OR`/`||`,
//! `AND`/`&&`, `isLiteral`, `lang`, `langMatches` and `str`. Every triple pattern is
//! matched by a full scan of the graph; it exists to cross-check the compiler, not to be
//! fast.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, Literal, LiteralKind, Value};
use crate::sexpr::eval::{compare_literals, AnswerSet};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("sparql {0}")]
pub struct QueryError(pub String);

fn qerr<T>(msg: impl Into<String>) -> Result<T, QueryError> {
    Err(QueryError(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Var(String),
    Iri(String),
    Str(String),
    Num(String),
    Punct(&'static str),
}

const PUNCTS: [&str; 15] = [
    "!=", "<=", ">=", "||", "&&", "^^", "{", "}", "(", ")", ".", ",", "=", "<", ">",
];

fn tokenize(src: &str) -> Result<Vec<Tok>, QueryError> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '<' {
            // IRI reference if it closes before whitespace
            if let Some(end) = chars[i + 1..].iter().position(|&x| x == '>' || x.is_whitespace()) {
                if chars[i + 1 + end] == '>' && end > 0 {
                    out.push(Tok::Iri(chars[i + 1..i + 1 + end].iter().collect()));
                    i += end + 2;
                    continue;
                }
            }
        }
        if c == '"' || c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return qerr("unterminated string"),
                    Some('\\') => {
                        let n = chars.get(i + 1).copied().unwrap_or('\\');
                        s.push(if n == 'n' { '\n' } else { n });
                        i += 2;
                    }
                    Some(&q) if q == c => {
                        i += 1;
                        break;
                    }
                    Some(&x) => {
                        s.push(x);
                        i += 1;
                    }
                }
            }
            out.push(Tok::Str(s));
            continue;
        }
        if c == '?' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Var(chars[start..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || "+-.".contains(chars[i])) {
                i += 1;
            }
            // a trailing '.' terminates the pattern rather than belonging to the number
            while i > start + 1 && chars[i - 1] == '.' {
                i -= 1;
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
            continue;
        }
        if let Some(p) = PUNCTS.iter().find(|p| chars[i..].starts_with(&p.chars().collect::<Vec<_>>())) {
            out.push(Tok::Punct(p));
            i += p.len();
            continue;
        }
        if c == '!' {
            out.push(Tok::Punct("!"));
            i += 1;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || "_:.-".contains(chars[i])) {
                i += 1;
            }
            while chars[i - 1] == '.' {
                i -= 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
            continue;
        }
        return qerr(format!("unexpected character `{c}`"));
    }
    Ok(out)
}

/// An RDF term as seen by the interpreter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Lit(Literal),
}

#[derive(Debug, Clone)]
enum Node {
    Var(String),
    Const(Term),
}

#[derive(Debug, Clone)]
enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Cmp(&'static str, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Node(Node),
}

#[derive(Debug, Clone)]
enum Item {
    Triple(Node, Node, Node),
    Filter(Expr),
    Values(String, Vec<Term>),
    Sub(Box<Query>),
}

#[derive(Debug, Clone)]
enum Projection {
    Distinct(String),
    Count(String, String),
    Extreme { max: bool, var: String, alias: String },
}

#[derive(Debug, Clone)]
struct Query {
    projection: Projection,
    group: Vec<Item>,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    prefixes: HashMap<String, String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, QueryError> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t.ok_or_else(|| QueryError("unexpected end of query".into()))
    }

    fn punct(&mut self, p: &str) -> Result<(), QueryError> {
        match self.next()? {
            Tok::Punct(x) if x == p => Ok(()),
            t => qerr(format!("expected `{p}`, found {t:?}")),
        }
    }

    fn keyword(&mut self, k: &str) -> Result<(), QueryError> {
        match self.next()? {
            Tok::Word(w) if w.eq_ignore_ascii_case(k) => Ok(()),
            t => qerr(format!("expected `{k}`, found {t:?}")),
        }
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(k))
    }

    fn var(&mut self) -> Result<String, QueryError> {
        match self.next()? {
            Tok::Var(v) => Ok(v),
            t => qerr(format!("expected variable, found {t:?}")),
        }
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        while self.is_keyword("PREFIX") {
            self.pos += 1;
            let name = match self.next()? {
                Tok::Word(w) if w.ends_with(':') => w.trim_end_matches(':').to_string(),
                t => return qerr(format!("bad prefix name {t:?}")),
            };
            let iri = match self.next()? {
                Tok::Iri(i) => i,
                t => return qerr(format!("bad prefix IRI {t:?}")),
            };
            self.prefixes.insert(name, iri);
        }
        self.select()
    }

    fn select(&mut self) -> Result<Query, QueryError> {
        self.keyword("SELECT")?;
        let projection = if self.is_keyword("DISTINCT") {
            self.pos += 1;
            Projection::Distinct(self.var()?)
        } else {
            self.punct("(")?;
            let func = match self.next()? {
                Tok::Word(w) => w.to_ascii_uppercase(),
                t => return qerr(format!("expected aggregate, found {t:?}")),
            };
            self.punct("(")?;
            if func == "COUNT" {
                self.keyword("DISTINCT")?;
            }
            let v = self.var()?;
            self.punct(")")?;
            self.keyword("AS")?;
            let alias = self.var()?;
            self.punct(")")?;
            match func.as_str() {
                "COUNT" => Projection::Count(v, alias),
                "MAX" => Projection::Extreme { max: true, var: v, alias },
                "MIN" => Projection::Extreme { max: false, var: v, alias },
                f => return qerr(format!("unsupported aggregate {f}")),
            }
        };
        self.keyword("WHERE")?;
        let group = self.group()?;
        Ok(Query { projection, group })
    }

    fn group(&mut self) -> Result<Vec<Item>, QueryError> {
        self.punct("{")?;
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Punct("}")) => {
                    self.pos += 1;
                    return Ok(items);
                }
                Some(Tok::Punct("{")) => {
                    self.pos += 1;
                    let q = self.select()?;
                    self.punct("}")?;
                    items.push(Item::Sub(Box::new(q)));
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {
                    self.pos += 1;
                    self.punct("(")?;
                    let e = self.expr()?;
                    self.punct(")")?;
                    items.push(Item::Filter(e));
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("VALUES") => {
                    self.pos += 1;
                    let v = self.var()?;
                    self.punct("{")?;
                    let mut terms = Vec::new();
                    while !matches!(self.peek(), Some(Tok::Punct("}"))) {
                        match self.node()? {
                            Node::Const(t) => terms.push(t),
                            Node::Var(_) => return qerr("variable inside VALUES"),
                        }
                    }
                    self.pos += 1;
                    items.push(Item::Values(v, terms));
                }
                None => return qerr("unbalanced braces"),
                _ => {
                    let s = self.node()?;
                    let p = self.node()?;
                    let o = self.node()?;
                    self.punct(".")?;
                    items.push(Item::Triple(s, p, o));
                }
            }
        }
    }

    fn expand(&self, pname: &str) -> Result<String, QueryError> {
        let (pre, local) = pname
            .split_once(':')
            .ok_or_else(|| QueryError(format!("not a prefixed name: {pname}")))?;
        let base = self
            .prefixes
            .get(pre)
            .ok_or_else(|| QueryError(format!("undeclared prefix {pre}")))?;
        Ok(format!("{base}{local}"))
    }

    fn node(&mut self) -> Result<Node, QueryError> {
        Ok(match self.next()? {
            Tok::Var(v) => Node::Var(v),
            Tok::Iri(i) => Node::Const(Term::Iri(i)),
            Tok::Word(w) if w.contains(':') => Node::Const(Term::Iri(self.expand(&w)?)),
            Tok::Num(n) => {
                let l = Literal::new(LiteralKind::Number, &n).map_err(|e| QueryError(e.to_string()))?;
                Node::Const(Term::Lit(l))
            }
            Tok::Str(s) => {
                if matches!(self.peek(), Some(Tok::Punct("^^"))) {
                    self.pos += 1;
                    let dt = match self.next()? {
                        Tok::Word(w) => self.expand(&w)?,
                        Tok::Iri(i) => i,
                        t => return qerr(format!("bad datatype {t:?}")),
                    };
                    let kind = match dt.rsplit('#').next() {
                        Some("date") | Some("dateTime") | Some("gYear") => LiteralKind::Date,
                        Some("double") | Some("integer") | Some("decimal") | Some("float") => LiteralKind::Number,
                        _ => LiteralKind::String,
                    };
                    let l = Literal::new(kind, &s).map_err(|e| QueryError(e.to_string()))?;
                    Node::Const(Term::Lit(l))
                } else {
                    Node::Const(Term::Lit(Literal::string(s)))
                }
            }
            t => return qerr(format!("expected term, found {t:?}")),
        })
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.and_expr()?;
        loop {
            let is_or = matches!(self.peek(), Some(Tok::Punct("||")))
                || matches!(self.peek(), Some(Tok::Word(w)) if w == "OR");
            if !is_or {
                return Ok(left);
            }
            self.pos += 1;
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
    }

    fn and_expr(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.unary()?;
        loop {
            let is_and = matches!(self.peek(), Some(Tok::Punct("&&")))
                || matches!(self.peek(), Some(Tok::Word(w)) if w == "AND");
            if !is_and {
                return Ok(left);
            }
            self.pos += 1;
            let right = self.unary()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
    }

    fn unary(&mut self) -> Result<Expr, QueryError> {
        if matches!(self.peek(), Some(Tok::Punct("!"))) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        let left = self.primary()?;
        let op = match self.peek() {
            Some(Tok::Punct(p)) if ["=", "!=", "<", "<=", ">", ">="].contains(p) => *p,
            _ => return Ok(left),
        };
        self.pos += 1;
        let right = self.primary()?;
        Ok(Expr::Cmp(op, Box::new(left), Box::new(right)))
    }

    fn primary(&mut self) -> Result<Expr, QueryError> {
        match self.peek() {
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.punct(")")?;
                Ok(e)
            }
            Some(Tok::Word(w)) if !w.contains(':') => {
                let name = w.clone();
                self.pos += 1;
                self.punct("(")?;
                let mut args = vec![self.expr()?];
                while matches!(self.peek(), Some(Tok::Punct(","))) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.punct(")")?;
                Ok(Expr::Call(name, args))
            }
            _ => Ok(Expr::Node(self.node()?)),
        }
    }
}

type Binding = BTreeMap<String, Term>;

#[derive(Debug, Clone, PartialEq)]
enum EvalVal {
    Bool(bool),
    Term(Term),
}

struct Engine<'g> {
    graph: &'g KnowledgeGraph,
    ns: String,
    terms: Vec<(Term, Term, Term)>,
}

impl<'g> Engine<'g> {
    fn new(graph: &'g KnowledgeGraph, ns: &str) -> Self {
        let iri = |e: &EntityId| Term::Iri(format!("{ns}{e}"));
        let terms = graph
            .triples()
            .iter()
            .map(|t| {
                let tail = match &t.tail {
                    Value::Entity(e) => iri(e),
                    Value::Literal(l) => Term::Lit(l.clone()),
                };
                (iri(&t.head), Term::Iri(format!("{ns}{}", t.relation)), tail)
            })
            .collect();
        Engine {
            graph,
            ns: ns.to_string(),
            terms,
        }
    }

    fn group(&self, items: &[Item]) -> Vec<Binding> {
        let mut sols: Vec<Binding> = vec![Binding::new()];
        let mut filters = Vec::new();
        for item in items {
            match item {
                Item::Filter(e) => filters.push(e),
                Item::Triple(s, p, o) => {
                    let mut next = Vec::new();
                    for b in &sols {
                        for (ts, tp, to) in &self.terms {
                            let mut nb = b.clone();
                            if unify(&mut nb, s, ts) && unify(&mut nb, p, tp) && unify(&mut nb, o, to) {
                                next.push(nb);
                            }
                        }
                    }
                    sols = next;
                }
                Item::Values(v, terms) => {
                    let node = Node::Var(v.clone());
                    let node = &node;
                    sols = sols
                        .iter()
                        .flat_map(|b| {
                            terms.iter().filter_map(move |t| {
                                let mut nb = b.clone();
                                unify(&mut nb, node, t).then_some(nb)
                            })
                        })
                        .collect();
                }
                Item::Sub(q) => {
                    let inner = self.solutions(q);
                    let mut next = Vec::new();
                    for b in &sols {
                        for ib in &inner {
                            if let Some(m) = merge(b, ib) {
                                next.push(m);
                            }
                        }
                    }
                    sols = next;
                }
            }
        }
        sols.retain(|b| filters.iter().all(|f| matches!(self.eval(f, b), Ok(EvalVal::Bool(true)))));
        sols
    }

    fn solutions(&self, q: &Query) -> Vec<Binding> {
        let sols = self.group(&q.group);
        match &q.projection {
            Projection::Distinct(v) => {
                let set: BTreeSet<&Term> = sols.iter().filter_map(|b| b.get(v)).collect();
                set.into_iter()
                    .map(|t| Binding::from([(v.clone(), t.clone())]))
                    .collect()
            }
            Projection::Count(v, alias) => {
                let n = sols.iter().filter_map(|b| b.get(v)).collect::<BTreeSet<_>>().len();
                vec![Binding::from([(alias.clone(), Term::Lit(Literal::number(n as f64)))])]
            }
            Projection::Extreme { max, var, alias } => {
                let mut best: Option<&Literal> = None;
                for b in &sols {
                    let Some(Term::Lit(l)) = b.get(var) else { continue };
                    best = match best {
                        None => Some(l),
                        Some(cur) => match compare_literals(l, cur) {
                            Ok(Ordering::Greater) if *max => Some(l),
                            Ok(Ordering::Less) if !*max => Some(l),
                            Ok(_) => Some(cur),
                            Err(_) => return vec![Binding::new()],
                        },
                    };
                }
                match best {
                    Some(l) => vec![Binding::from([(alias.clone(), Term::Lit(l.clone()))])],
                    None => vec![Binding::new()],
                }
            }
        }
    }

    fn eval(&self, e: &Expr, b: &Binding) -> Result<EvalVal, ()> {
        match e {
            Expr::Node(Node::Const(t)) => Ok(EvalVal::Term(t.clone())),
            Expr::Node(Node::Var(v)) => b.get(v).cloned().map(EvalVal::Term).ok_or(()),
            Expr::Not(x) => match self.eval(x, b)? {
                EvalVal::Bool(v) => Ok(EvalVal::Bool(!v)),
                _ => Err(()),
            },
            Expr::Or(x, y) => {
                let l = self.eval(x, b);
                let r = self.eval(y, b);
                match (l, r) {
                    (Ok(EvalVal::Bool(true)), _) | (_, Ok(EvalVal::Bool(true))) => Ok(EvalVal::Bool(true)),
                    (Ok(EvalVal::Bool(false)), Ok(EvalVal::Bool(false))) => Ok(EvalVal::Bool(false)),
                    _ => Err(()),
                }
            }
            Expr::And(x, y) => {
                let l = self.eval(x, b);
                let r = self.eval(y, b);
                match (l, r) {
                    (Ok(EvalVal::Bool(false)), _) | (_, Ok(EvalVal::Bool(false))) => Ok(EvalVal::Bool(false)),
                    (Ok(EvalVal::Bool(true)), Ok(EvalVal::Bool(true))) => Ok(EvalVal::Bool(true)),
                    _ => Err(()),
                }
            }
            Expr::Cmp(op, x, y) => {
                let (EvalVal::Term(l), EvalVal::Term(r)) = (self.eval(x, b)?, self.eval(y, b)?) else {
                    return Err(());
                };
                let ord = match (&l, &r) {
                    (Term::Iri(a), Term::Iri(b)) => {
                        if !matches!(*op, "=" | "!=") {
                            return Err(());
                        }
                        a.cmp(b)
                    }
                    (Term::Lit(a), Term::Lit(b)) => match compare_literals(a, b) {
                        Ok(o) => o,
                        Err(_) if a.kind() == LiteralKind::String && b.kind() == LiteralKind::String => {
                            a.value().cmp(b.value())
                        }
                        Err(_) if matches!(*op, "=" | "!=") => {
                            return Ok(EvalVal::Bool(*op == "!="));
                        }
                        Err(_) => return Err(()),
                    },
                    _ => {
                        if matches!(*op, "=" | "!=") {
                            return Ok(EvalVal::Bool(*op == "!="));
                        }
                        return Err(());
                    }
                };
                Ok(EvalVal::Bool(match *op {
                    "=" => ord == Ordering::Equal,
                    "!=" => ord != Ordering::Equal,
                    "<" => ord == Ordering::Less,
                    "<=" => ord != Ordering::Greater,
                    ">" => ord == Ordering::Greater,
                    _ => ord != Ordering::Less,
                }))
            }
            Expr::Call(name, args) => {
                let vals: Vec<EvalVal> = args.iter().map(|a| self.eval(a, b)).collect::<Result<_, _>>()?;
                match (name.to_ascii_lowercase().as_str(), vals.as_slice()) {
                    ("isliteral", [EvalVal::Term(t)]) => Ok(EvalVal::Bool(matches!(t, Term::Lit(_)))),
                    // literals in the graph carry no language tag
                    ("lang", [EvalVal::Term(Term::Lit(_))]) => Ok(EvalVal::Term(Term::Lit(Literal::string("")))),
                    ("langmatches", [EvalVal::Term(Term::Lit(tag)), EvalVal::Term(Term::Lit(range))]) => {
                        let tag = tag.value().to_ascii_lowercase();
                        let range = range.value().to_ascii_lowercase();
                        Ok(EvalVal::Bool(
                            !tag.is_empty() && (range == "*" || tag == range || tag.starts_with(&format!("{range}-"))),
                        ))
                    }
                    ("str", [EvalVal::Term(t)]) => Ok(EvalVal::Term(Term::Lit(Literal::string(match t {
                        Term::Iri(i) => i.clone(),
                        Term::Lit(l) => l.value().to_string(),
                    })))),
                    _ => Err(()),
                }
            }
        }
    }

    fn to_value(&self, t: &Term) -> Option<Value> {
        match t {
            Term::Iri(i) => {
                let local = i.strip_prefix(&self.ns)?;
                let id = EntityId::new(local).ok()?;
                self.graph.contains_entity(&id).then_some(Value::Entity(id))
            }
            Term::Lit(l) => Some(Value::Literal(l.clone())),
        }
    }
}

fn unify(b: &mut Binding, n: &Node, t: &Term) -> bool {
    match n {
        Node::Const(c) => c == t,
        Node::Var(v) => match b.get(v) {
            Some(bound) => bound == t,
            None => {
                b.insert(v.clone(), t.clone());
                true
            }
        },
    }
}

fn merge(a: &Binding, b: &Binding) -> Option<Binding> {
    let mut out = a.clone();
    for (k, v) in b {
        match out.get(k) {
            Some(x) if x != v => return None,
            Some(_) => {}
            None => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    Some(out)
}

/// Parses and runs a query against the graph. IRIs under the `ns:` namespace map back to
/// entity ids; the result mirrors what [`crate::sexpr::evaluate`] returns.
pub fn run_query(query: &str, graph: &KnowledgeGraph) -> Result<AnswerSet, QueryError> {
    let mut p = Parser {
        toks: tokenize(query)?,
        pos: 0,
        prefixes: HashMap::new(),
    };
    let q = p.query()?;
    if p.pos != p.toks.len() {
        return qerr("trailing tokens after query");
    }
    let ns = p
        .prefixes
        .get("ns")
        .cloned()
        .unwrap_or_else(|| super::NS_IRI.to_string());
    let engine = Engine::new(graph, &ns);
    let sols = engine.solutions(&q);
    match &q.projection {
        Projection::Distinct(v) => Ok(AnswerSet::Values(
            sols.iter()
                .filter_map(|b| b.get(v))
                .filter_map(|t| engine.to_value(t))
                .collect(),
        )),
        Projection::Count(_, alias) => match sols.first().and_then(|b| b.get(alias)) {
            Some(Term::Lit(l)) => Ok(AnswerSet::Count(l.as_number().unwrap_or(0.0) as u64)),
            _ => qerr("count did not bind"),
        },
        Projection::Extreme { .. } => qerr("aggregate projection only allowed in sub-selects"),
    }
}
