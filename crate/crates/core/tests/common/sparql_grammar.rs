//! Recursive-descent recognizer for the SPARQL 1.1 subset the compiler emits.
//! `OR` is accepted next to `||` because the reference listing uses it.

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Iri(String),
    PName(String, String),
    Var(String),
    Str(String),
    Num(String),
    Word(String),
    Punct(String),
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let cs: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '<' {
            if let Some(end) = cs[i + 1..].iter().position(|&x| x == '>' || x.is_whitespace()) {
                if cs[i + 1 + end] == '>' && end > 0 {
                    out.push(Tok::Iri(cs[i + 1..i + 1 + end].iter().collect()));
                    i += end + 2;
                    continue;
                }
            }
        }
        if c == '"' || c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match cs.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('\\') => {
                        s.push(*cs.get(i + 1).ok_or("dangling escape")?);
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
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            if i == start {
                return Err("empty variable".into());
            }
            out.push(Tok::Var(cs[start..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && cs.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.' || cs[i] == 'e' || cs[i] == 'E') {
                i += 1;
            }
            let n: String = cs[start..i].iter().collect();
            n.parse::<f64>().map_err(|_| format!("bad number {n}"))?;
            out.push(Tok::Num(n));
            continue;
        }
        if c.is_alphabetic() {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            let word: String = cs[start..i].iter().collect();
            if cs.get(i) == Some(&':') {
                i += 1;
                let ls = i;
                while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_' || cs[i] == '.' || cs[i] == '-') {
                    i += 1;
                }
                // a local name cannot end with '.'
                while i > ls && cs[i - 1] == '.' {
                    i -= 1;
                }
                out.push(Tok::PName(word, cs[ls..i].iter().collect()));
            } else {
                out.push(Tok::Word(word));
            }
            continue;
        }
        let two: String = cs[i..(i + 2).min(cs.len())].iter().collect();
        if ["!=", "<=", ">=", "||", "&&", "^^"].contains(&two.as_str()) {
            out.push(Tok::Punct(two));
            i += 2;
            continue;
        }
        if "(){}.,=<>!@*".contains(c) {
            out.push(Tok::Punct(c.to_string()));
            i += 1;
            continue;
        }
        return Err(format!("unexpected character {c:?}"));
    }
    Ok(out)
}

struct P {
    t: Vec<Tok>,
    i: usize,
    prefixes: Vec<String>,
}

impl P {
    fn peek(&self) -> Option<&Tok> {
        self.t.get(self.i)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x.eq_ignore_ascii_case(w))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(x)) if x == p)
    }

    fn word(&mut self, w: &str) -> Result<(), String> {
        if self.is_word(w) {
            self.i += 1;
            Ok(())
        } else {
            Err(format!("expected {w} at token {} ({:?})", self.i, self.peek()))
        }
    }

    fn punct(&mut self, p: &str) -> Result<(), String> {
        if self.is_punct(p) {
            self.i += 1;
            Ok(())
        } else {
            Err(format!("expected `{p}` at token {} ({:?})", self.i, self.peek()))
        }
    }

    fn var(&mut self) -> Result<(), String> {
        match self.peek() {
            Some(Tok::Var(_)) => {
                self.i += 1;
                Ok(())
            }
            other => Err(format!("expected variable, found {other:?}")),
        }
    }

    fn iri(&mut self) -> Result<bool, String> {
        match self.peek().cloned() {
            Some(Tok::Iri(_)) => {
                self.i += 1;
                Ok(true)
            }
            Some(Tok::PName(p, _)) => {
                if !self.prefixes.contains(&p) {
                    return Err(format!("undeclared prefix {p}"));
                }
                self.i += 1;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn literal(&mut self) -> Result<bool, String> {
        match self.peek() {
            Some(Tok::Num(_)) => {
                self.i += 1;
                Ok(true)
            }
            Some(Tok::Str(_)) => {
                self.i += 1;
                if self.is_punct("^^") {
                    self.i += 1;
                    if !self.iri()? {
                        return Err("datatype IRI expected".into());
                    }
                } else if self.is_punct("@") {
                    self.i += 1;
                    match self.peek() {
                        Some(Tok::Word(_)) => self.i += 1,
                        _ => return Err("language tag expected".into()),
                    }
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn term(&mut self, allow_literal: bool) -> Result<(), String> {
        if matches!(self.peek(), Some(Tok::Var(_))) {
            return self.var();
        }
        if self.iri()? || (allow_literal && self.literal()?) {
            return Ok(());
        }
        Err(format!("term expected at token {} ({:?})", self.i, self.peek()))
    }

    fn query(&mut self) -> Result<(), String> {
        while self.is_word("PREFIX") {
            self.i += 1;
            match self.peek().cloned() {
                Some(Tok::PName(p, l)) if l.is_empty() => {
                    self.i += 1;
                    self.prefixes.push(p);
                }
                other => return Err(format!("prefix name expected, found {other:?}")),
            }
            match self.peek() {
                Some(Tok::Iri(_)) => self.i += 1,
                other => return Err(format!("IRI expected, found {other:?}")),
            }
        }
        self.select()?;
        if self.i != self.t.len() {
            return Err(format!("trailing tokens from {}", self.i));
        }
        Ok(())
    }

    fn select(&mut self) -> Result<(), String> {
        self.word("SELECT")?;
        if self.is_word("DISTINCT") {
            self.i += 1;
        }
        let mut items = 0;
        loop {
            if matches!(self.peek(), Some(Tok::Var(_))) {
                self.var()?;
            } else if self.is_punct("(") {
                self.i += 1;
                self.expr()?;
                self.word("AS")?;
                self.var()?;
                self.punct(")")?;
            } else {
                break;
            }
            items += 1;
        }
        if items == 0 {
            return Err("empty projection".into());
        }
        if self.is_word("WHERE") {
            self.i += 1;
        }
        self.group()
    }

    fn group(&mut self) -> Result<(), String> {
        self.punct("{")?;
        if self.is_word("SELECT") {
            self.select()?;
            return self.punct("}");
        }
        loop {
            if self.is_punct("}") {
                self.i += 1;
                return Ok(());
            }
            if self.is_punct("{") {
                self.group()?;
            } else if self.is_word("FILTER") {
                self.i += 1;
                self.punct("(")?;
                self.expr()?;
                self.punct(")")?;
            } else if self.is_word("VALUES") {
                self.i += 1;
                self.var()?;
                self.punct("{")?;
                while !self.is_punct("}") {
                    if !(self.iri()? || self.literal()?) {
                        return Err(format!("data value expected at {}", self.i));
                    }
                }
                self.i += 1;
            } else {
                self.term(false)?;
                self.term(false)?;
                self.term(true)?;
                self.punct(".")?;
            }
        }
    }

    fn expr(&mut self) -> Result<(), String> {
        self.and_expr()?;
        while self.is_punct("||") || self.is_word("OR") {
            self.i += 1;
            self.and_expr()?;
        }
        Ok(())
    }

    fn and_expr(&mut self) -> Result<(), String> {
        self.rel()?;
        while self.is_punct("&&") {
            self.i += 1;
            self.rel()?;
        }
        Ok(())
    }

    fn rel(&mut self) -> Result<(), String> {
        self.unary()?;
        if ["=", "!=", "<", ">", "<=", ">="].iter().any(|p| self.is_punct(p)) {
            self.i += 1;
            self.unary()?;
        }
        Ok(())
    }

    fn unary(&mut self) -> Result<(), String> {
        if self.is_punct("!") {
            self.i += 1;
            return self.unary();
        }
        if self.is_punct("(") {
            self.i += 1;
            self.expr()?;
            return self.punct(")");
        }
        const CALLS: [&str; 7] = ["isLiteral", "lang", "langMatches", "str", "COUNT", "MAX", "MIN"];
        if let Some(Tok::Word(w)) = self.peek().cloned() {
            if CALLS.iter().any(|c| c.eq_ignore_ascii_case(&w)) {
                self.i += 1;
                self.punct("(")?;
                if self.is_word("DISTINCT") {
                    self.i += 1;
                }
                self.expr()?;
                while self.is_punct(",") {
                    self.i += 1;
                    self.expr()?;
                }
                return self.punct(")");
            }
            return Err(format!("unknown function {w}"));
        }
        self.term(true)
    }
}

/// Ok iff `query` is in the accepted subset.
pub fn check_sparql(query: &str) -> Result<(), String> {
    let t = lex(query)?;
    P {
        t,
        i: 0,
        prefixes: Vec::new(),
    }
    .query()
}
