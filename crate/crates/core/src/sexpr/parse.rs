use thiserror::Error;

use super::{CompareOp, EntityRef, SExpr};
use crate::kg::{is_iso_date, EntityId, Literal, LiteralKind};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Quoted(String),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '(' => {
                out.push((i, Tok::Open));
                chars.next();
            }
            ')' => {
                out.push((i, Tok::Close));
                chars.next();
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '\\' => match chars.next() {
                            Some((_, n)) => s.push(n),
                            None => break,
                        },
                        '"' => {
                            closed = true;
                            break;
                        }
                        _ => s.push(c),
                    }
                }
                if !closed {
                    return err(i, "unterminated string literal");
                }
                out.push((i, Tok::Quoted(s)));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                out.push((i, Tok::Atom(s)));
            }
        }
    }
    Ok(out)
}

/// Parses a logical form. Whitespace-insensitive; operator heads are case-insensitive.
pub fn parse(text: &str) -> Result<SExpr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    if p.toks.is_empty() {
        return err(0, "empty expression");
    }
    let e = p.expr()?;
    if let Some((off, _)) = p.toks.get(p.pos) {
        return err(*off, "trailing input after expression");
    }
    Ok(e)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

fn is_number(atom: &str) -> bool {
    let first = atom.chars().next();
    matches!(first, Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.')
        && atom.parse::<f64>().map(f64::is_finite).unwrap_or(false)
}

/// Bare atom to operand: number, ISO date (with at least one dash), MID, or label.
fn classify(atom: &str) -> SExpr {
    if atom.contains('-') && is_iso_date(atom) {
        return SExpr::Literal(Literal::date(atom).expect("validated date"));
    }
    if is_number(atom) {
        return SExpr::Literal(Literal::new(LiteralKind::Number, atom).expect("validated number"));
    }
    SExpr::Entity(EntityRef::from_atom(atom))
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => err(self.end, "unbalanced parentheses: unexpected end of input"),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn close(&mut self, op: &str) -> Result<(), ParseError> {
        match self.next()? {
            (_, Tok::Close) => Ok(()),
            (off, _) => err(off, format!("wrong arity for {op}")),
        }
    }

    fn relation(&mut self, op: &str) -> Result<String, ParseError> {
        match self.next()? {
            (_, Tok::Atom(a)) if !is_number(&a) => Ok(a),
            (off, _) => err(off, format!("{op} expects a relation name")),
        }
    }

    fn expr(&mut self) -> Result<SExpr, ParseError> {
        match self.next()? {
            (_, Tok::Atom(a)) => Ok(classify(&a)),
            (_, Tok::Quoted(s)) => Ok(SExpr::Literal(Literal::string(s))),
            (off, Tok::Close) => err(off, "unbalanced parentheses: unexpected `)`"),
            (off, Tok::Open) => {
                let head = match self.next()? {
                    (_, Tok::Atom(a)) => a.to_ascii_uppercase(),
                    (o, _) => return err(o, "expected operator"),
                };
                match head.as_str() {
                    "JOIN" => self.join(),
                    "AND" => {
                        let a = self.arg("AND")?;
                        let b = self.arg("AND")?;
                        self.close("AND")?;
                        Ok(SExpr::And(Box::new(a), Box::new(b)))
                    }
                    "COUNT" => {
                        let a = self.arg("COUNT")?;
                        self.close("COUNT")?;
                        Ok(SExpr::Count(Box::new(a)))
                    }
                    "ARGMAX" | "ARGMIN" => {
                        let a = self.arg(&head)?;
                        let r = self.relation(&head)?;
                        self.close(&head)?;
                        Ok(if head == "ARGMAX" {
                            SExpr::ArgMax(Box::new(a), r)
                        } else {
                            SExpr::ArgMin(Box::new(a), r)
                        })
                    }
                    "GT" | "GE" | "LT" | "LE" => {
                        let op = match head.as_str() {
                            "GT" => CompareOp::Gt,
                            "GE" => CompareOp::Ge,
                            "LT" => CompareOp::Lt,
                            _ => CompareOp::Le,
                        };
                        let a = self.arg(&head)?;
                        let at = self.offset();
                        let lit = match self.arg(&head)? {
                            SExpr::Literal(l) if l.kind() != LiteralKind::String => l,
                            _ => return err(at, format!("{head} expects a number or date literal")),
                        };
                        self.close(&head)?;
                        Ok(SExpr::Compare(op, Box::new(a), lit))
                    }
                    _ => err(off + 1, format!("unknown operator `{head}`")),
                }
            }
        }
    }

    fn arg(&mut self, op: &str) -> Result<SExpr, ParseError> {
        if matches!(self.peek(), Some(Tok::Close) | None) {
            return err(self.offset(), format!("wrong arity for {op}"));
        }
        self.expr()
    }

    fn join(&mut self) -> Result<SExpr, ParseError> {
        let (relation, inverse) = match self.peek() {
            Some(Tok::Open) => {
                self.pos += 1;
                match self.next()? {
                    (_, Tok::Atom(a)) if a == "R" || a == "r" => {}
                    (o, _) => return err(o, "expected `R` inside JOIN relation"),
                }
                let r = self.relation("R")?;
                self.close("R")?;
                (r, true)
            }
            _ => (self.relation("JOIN")?, false),
        };
        // multi-word labels: `(JOIN r Harper Lee)`
        let start = self.pos;
        let mut words = Vec::new();
        while let Some(Tok::Atom(a)) = self.peek() {
            words.push(a.clone());
            self.pos += 1;
        }
        let operand = if words.len() > 1 {
            let joined = words.join(" ");
            if words.iter().any(|w| is_number(w) || EntityId::looks_like_mid(w)) {
                return err(self.toks[start + 1].0, "wrong arity for JOIN");
            }
            SExpr::Entity(EntityRef::Label(joined))
        } else if words.len() == 1 {
            classify(&words[0])
        } else {
            self.arg("JOIN")?
        };
        self.close("JOIN")?;
        Ok(SExpr::Join {
            relation,
            inverse,
            operand: Box::new(operand),
        })
    }
}
