//! In-memory knowledge graph: a deduplicated triple set with head, tail, relation,
//! label and alias indexes.
//!
//! The graph is immutable once built. It is loaded from tab-separated text:
//!
//! * triples: `head_id<TAB>relation<TAB>tail<TAB>kind`, kind in `entity|string|number|date`
//! * aliases: `entity_id<TAB>alias_text<TAB>popularity`
//! * labels:  `entity_id<TAB>label`
//!
//! Lines starting with `#` and blank lines are ignored in all three formats.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::text::{casefold, relation_tokens};

/// Default cap on linearized document length, in words.
pub const DEFAULT_MAX_WORDS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown literal kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("invalid {kind} literal `{value}`")]
    InvalidLiteral { kind: &'static str, value: String },
    #[error("entity id must be nonempty")]
    EmptyId,
    #[error("relation must be nonempty")]
    EmptyRelation,
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("read error: {0}")]
    Io(String),
}

/// Opaque entity identifier (`m.05nrg`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, KgError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(KgError::EmptyId);
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for Freebase-style machine ids (`m.…`, `g.…`).
    pub fn looks_like_mid(token: &str) -> bool {
        (token.starts_with("m.") || token.starts_with("g.")) && token.len() > 2
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralKind {
    String,
    Number,
    Date,
}

impl LiteralKind {
    pub fn name(self) -> &'static str {
        match self {
            LiteralKind::String => "string",
            LiteralKind::Number => "number",
            LiteralKind::Date => "date",
        }
    }
}

/// A typed literal. Numbers are stored in canonical text form so that equality and
/// hashing agree with numeric equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    kind: LiteralKind,
    value: String,
}

impl Literal {
    pub fn new(kind: LiteralKind, text: &str) -> Result<Self, KgError> {
        match kind {
            LiteralKind::String => Ok(Literal::string(text)),
            LiteralKind::Number => {
                let v: f64 = text.trim().parse().map_err(|_| KgError::InvalidLiteral {
                    kind: "number",
                    value: text.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(KgError::InvalidLiteral {
                        kind: "number",
                        value: text.to_string(),
                    });
                }
                Ok(Literal::number(v))
            }
            LiteralKind::Date => {
                if !is_iso_date(text) {
                    return Err(KgError::InvalidLiteral {
                        kind: "date",
                        value: text.to_string(),
                    });
                }
                Ok(Literal {
                    kind,
                    value: text.to_string(),
                })
            }
        }
    }

    pub fn string(text: impl Into<String>) -> Self {
        Literal {
            kind: LiteralKind::String,
            value: text.into(),
        }
    }

    pub fn number(v: f64) -> Self {
        // -0 and 0 must collapse to one canonical form
        let v = if v == 0.0 { 0.0 } else { v };
        Literal {
            kind: LiteralKind::Number,
            value: format!("{v}"),
        }
    }

    pub fn date(text: &str) -> Result<Self, KgError> {
        Literal::new(LiteralKind::Date, text)
    }

    pub fn kind(&self) -> LiteralKind {
        self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn as_number(&self) -> Option<f64> {
        match self.kind {
            LiteralKind::Number => self.value.parse().ok(),
            _ => None,
        }
    }
}

/// `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
pub fn is_iso_date(text: &str) -> bool {
    let parts: Vec<&str> = text.split('-').collect();
    if parts.is_empty() || parts.len() > 3 {
        return false;
    }
    let digits = |s: &str, n: usize| s.len() == n && s.bytes().all(|b| b.is_ascii_digit());
    digits(parts[0], 4) && parts[1..].iter().all(|p| digits(p, 2))
}

/// Tail of a triple, and more generally any member of an answer set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Entity(EntityId),
    Literal(Literal),
}

impl Value {
    pub fn entity(id: &str) -> Self {
        Value::Entity(EntityId(id.to_string()))
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Value::Entity(e) => Some(e),
            Value::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Value::Literal(l) => Some(l),
            Value::Entity(_) => None,
        }
    }

    /// Entity id or literal text; the form gold answers are written in.
    pub fn canonical(&self) -> &str {
        match self {
            Value::Entity(e) => e.as_str(),
            Value::Literal(l) => l.value(),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.canonical())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: Value,
}

impl Triple {
    pub fn new(head: &str, relation: &str, tail: Value) -> Result<Self, KgError> {
        if relation.trim().is_empty() {
            return Err(KgError::EmptyRelation);
        }
        Ok(Triple {
            head: EntityId::new(head)?,
            relation: relation.to_string(),
            tail,
        })
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

/// Counts and diagnostics gathered while loading a graph.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct IngestReport {
    pub triples: usize,
    pub entities: usize,
    pub literals: usize,
    /// entities + distinct literal values
    pub nodes: usize,
    pub relations: usize,
    pub aliases: usize,
    pub duplicates: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// One alias-index hit.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasEntry {
    pub entity: EntityId,
    pub popularity: f64,
}

/// Accumulates triples, labels and aliases before indexing.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    triples: BTreeSet<Triple>,
    labels: BTreeMap<EntityId, String>,
    aliases: BTreeMap<String, BTreeMap<EntityId, (String, f64)>>,
    extra_entities: BTreeSet<EntityId>,
    duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the triple was already present.
    pub fn add_triple(&mut self, triple: Triple) -> bool {
        let fresh = self.triples.insert(triple);
        if !fresh {
            self.duplicates += 1;
        }
        fresh
    }

    pub fn set_label(&mut self, id: EntityId, label: impl Into<String>) {
        self.labels.insert(id, label.into());
    }

    pub fn add_alias(&mut self, id: EntityId, alias: &str, popularity: f64) {
        let key = casefold(alias);
        let slot = self.aliases.entry(key).or_default();
        let entry = slot.entry(id.clone()).or_insert((alias.to_string(), popularity));
        entry.1 = entry.1.max(popularity);
        self.extra_entities.insert(id);
    }

    pub fn build(self) -> KnowledgeGraph {
        let triples: Vec<Triple> = self.triples.into_iter().collect();

        let mut entity_ids: BTreeSet<EntityId> = self.extra_entities;
        entity_ids.extend(self.labels.keys().cloned());
        for t in &triples {
            entity_ids.insert(t.head.clone());
            if let Value::Entity(e) = &t.tail {
                entity_ids.insert(e.clone());
            }
        }

        // label fallback: explicit label, then most popular alias, then the id itself
        let mut best_alias: HashMap<&EntityId, (&str, f64)> = HashMap::new();
        for slot in self.aliases.values() {
            for (id, (surface, pop)) in slot {
                let e = best_alias.entry(id).or_insert((surface, *pop));
                if *pop > e.1 || (*pop == e.1 && surface.as_str() < e.0) {
                    *e = (surface, *pop);
                }
            }
        }
        let entities: BTreeMap<EntityId, String> = entity_ids
            .iter()
            .map(|id| {
                let label = self
                    .labels
                    .get(id)
                    .cloned()
                    .or_else(|| best_alias.get(id).map(|(s, _)| s.to_string()))
                    .unwrap_or_else(|| id.as_str().to_string());
                (id.clone(), label)
            })
            .collect();

        let mut by_head: HashMap<EntityId, Vec<usize>> = HashMap::new();
        let mut by_tail: HashMap<Value, Vec<usize>> = HashMap::new();
        let mut by_relation: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in triples.iter().enumerate() {
            by_head.entry(t.head.clone()).or_default().push(i);
            by_tail.entry(t.tail.clone()).or_default().push(i);
            by_relation.entry(t.relation.clone()).or_default().push(i);
        }

        let mut label_index: HashMap<String, Vec<EntityId>> = HashMap::new();
        for (id, label) in &entities {
            label_index.entry(casefold(label)).or_default().push(id.clone());
        }

        let aliases: HashMap<String, Vec<AliasEntry>> = self
            .aliases
            .into_iter()
            .map(|(k, slot)| {
                let entries = slot
                    .into_iter()
                    .map(|(entity, (_, popularity))| AliasEntry { entity, popularity })
                    .collect();
                (k, entries)
            })
            .collect();

        KnowledgeGraph {
            triples,
            entities,
            by_head,
            by_tail,
            by_relation,
            label_index,
            aliases,
            duplicates: self.duplicates,
        }
    }
}

/// Immutable triple store. All lookups are read-only, so a graph can be shared freely
/// across threads.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    entities: BTreeMap<EntityId, String>,
    by_head: HashMap<EntityId, Vec<usize>>,
    by_tail: HashMap<Value, Vec<usize>>,
    by_relation: BTreeMap<String, Vec<usize>>,
    label_index: HashMap<String, Vec<EntityId>>,
    aliases: HashMap<String, Vec<AliasEntry>>,
    duplicates: usize,
}

impl KnowledgeGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut b = GraphBuilder::new();
        for t in triples {
            b.add_triple(t);
        }
        b.build()
    }

    /// Triples in sorted order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn entities(&self) -> impl Iterator<Item = (&EntityId, &str)> {
        self.entities.iter().map(|(k, v)| (k, v.as_str()))
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entity(&self, id: &str) -> Option<&EntityId> {
        self.entities.get_key_value(&EntityId(id.to_string())).map(|(k, _)| k)
    }

    pub fn label<'a>(&'a self, id: &'a EntityId) -> &'a str {
        self.entities.get(id).map(String::as_str).unwrap_or(id.as_str())
    }

    /// Display text of a value: entity label or literal text.
    pub fn value_text<'a>(&'a self, v: &'a Value) -> &'a str {
        match v {
            Value::Entity(e) => self.label(e),
            Value::Literal(l) => l.value(),
        }
    }

    /// Entities whose label matches case-insensitively, sorted by id.
    pub fn resolve_label(&self, label: &str) -> &[EntityId] {
        self.label_index
            .get(&casefold(label))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.by_relation.keys().map(String::as_str)
    }

    pub fn relation_count(&self) -> usize {
        self.by_relation.len()
    }

    pub fn has_relation(&self, relation: &str) -> bool {
        self.by_relation.contains_key(relation)
    }

    pub fn with_head(&self, id: &EntityId) -> impl Iterator<Item = &Triple> {
        self.lookup(self.by_head.get(id))
    }

    pub fn with_tail(&self, v: &Value) -> impl Iterator<Item = &Triple> {
        self.lookup(self.by_tail.get(v))
    }

    pub fn with_relation(&self, relation: &str) -> impl Iterator<Item = &Triple> {
        self.lookup(self.by_relation.get(relation))
    }

    fn lookup<'a>(&'a self, idx: Option<&'a Vec<usize>>) -> impl Iterator<Item = &'a Triple> {
        idx.into_iter().flatten().map(move |&i| &self.triples[i])
    }

    /// Alias-index entries for a case-folded surface form.
    pub fn alias_entries(&self, alias: &str) -> &[AliasEntry] {
        self.aliases
            .get(&casefold(alias))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn aliases(&self) -> impl Iterator<Item = (&str, &[AliasEntry])> {
        self.aliases.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn alias_count(&self) -> usize {
        self.aliases.values().map(Vec::len).sum()
    }

    pub fn report(&self) -> IngestReport {
        let literals: BTreeSet<&Literal> = self
            .triples
            .iter()
            .filter_map(|t| t.tail.as_literal())
            .collect();
        IngestReport {
            triples: self.triples.len(),
            entities: self.entities.len(),
            literals: literals.len(),
            nodes: self.entities.len() + literals.len(),
            relations: self.by_relation.len(),
            aliases: self.alias_count(),
            duplicates: self.duplicates,
            diagnostics: Vec::new(),
        }
    }
}

fn lines<R: Read>(src: R) -> impl Iterator<Item = Result<(usize, String), KgError>> {
    BufReader::new(src)
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| KgError::Io(e.to_string())))
        .filter(|r| match r {
            Ok((_, l)) => {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        })
}

fn fields(line: usize, text: &str, n: usize) -> Result<Vec<&str>, KgError> {
    let parts: Vec<&str> = text.trim_end_matches(['\r', '\n']).split('\t').collect();
    if parts.len() != n {
        return Err(KgError::Malformed {
            line,
            message: format!("expected {n} tab-separated fields, found {}", parts.len()),
        });
    }
    Ok(parts)
}

fn malformed(line: usize) -> impl Fn(KgError) -> KgError {
    move |e| match e {
        KgError::Malformed { .. } | KgError::UnknownKind { .. } => e,
        other => KgError::Malformed {
            line,
            message: other.to_string(),
        },
    }
}

fn read_triples<R: Read>(src: R, b: &mut GraphBuilder, report: &mut IngestReport) -> Result<(), KgError> {
    for row in lines(src) {
        let (line, text) = row?;
        let f = fields(line, &text, 4)?;
        let tail = match f[3].trim() {
            "entity" => Value::Entity(EntityId::new(f[2]).map_err(malformed(line))?),
            "string" => Value::Literal(Literal::string(f[2])),
            "number" => Value::Literal(Literal::new(LiteralKind::Number, f[2]).map_err(malformed(line))?),
            "date" => Value::Literal(Literal::new(LiteralKind::Date, f[2]).map_err(malformed(line))?),
            other => {
                return Err(KgError::UnknownKind {
                    line,
                    kind: other.to_string(),
                })
            }
        };
        let triple = Triple::new(f[0], f[1], tail).map_err(malformed(line))?;
        if !b.add_triple(triple) {
            report.diagnostics.push(Diagnostic {
                line,
                message: "duplicate triple dropped".into(),
            });
        }
    }
    Ok(())
}

fn read_aliases<R: Read>(src: R, b: &mut GraphBuilder) -> Result<(), KgError> {
    for row in lines(src) {
        let (line, text) = row?;
        let f = fields(line, &text, 3)?;
        let id = EntityId::new(f[0]).map_err(malformed(line))?;
        let pop: f64 = f[2].trim().parse().map_err(|_| KgError::Malformed {
            line,
            message: format!("popularity `{}` is not a number", f[2]),
        })?;
        if !(pop.is_finite() && pop >= 0.0) {
            return Err(KgError::Malformed {
                line,
                message: format!("popularity must be nonnegative, got {pop}"),
            });
        }
        if f[1].trim().is_empty() {
            return Err(KgError::Malformed {
                line,
                message: "empty alias".into(),
            });
        }
        b.add_alias(id, f[1].trim(), pop);
    }
    Ok(())
}

fn read_labels<R: Read>(src: R, b: &mut GraphBuilder) -> Result<(), KgError> {
    for row in lines(src) {
        let (line, text) = row?;
        let f = fields(line, &text, 2)?;
        let id = EntityId::new(f[0]).map_err(malformed(line))?;
        b.set_label(id, f[1].trim());
    }
    Ok(())
}

/// Loads a graph from triple and alias TSV streams.
pub fn load_graph<T: Read, A: Read>(triples: T, aliases: A) -> Result<(KnowledgeGraph, IngestReport), KgError> {
    load_graph_with_labels(triples, aliases, None::<&[u8]>)
}

/// Same as [`load_graph`] with an optional label TSV stream.
pub fn load_graph_with_labels<T: Read, A: Read, L: Read>(
    triples: T,
    aliases: A,
    labels: Option<L>,
) -> Result<(KnowledgeGraph, IngestReport), KgError> {
    let mut b = GraphBuilder::new();
    let mut diag = IngestReport::default();
    read_triples(triples, &mut b, &mut diag)?;
    read_aliases(aliases, &mut b)?;
    if let Some(l) = labels {
        read_labels(l, &mut b)?;
    }
    let graph = b.build();
    let mut report = graph.report();
    report.diagnostics = diag.diagnostics;
    Ok((graph, report))
}

/// Linearized 1-hop neighbourhood of one head entity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityDocument {
    pub head: EntityId,
    pub text: String,
    pub word_count: usize,
    /// Tails of the triples that made it (at least partly) into `text`.
    #[serde(skip)]
    pub tails: Vec<Value>,
}

/// `head-label relation tokens tail-text`, e.g. `Oceania location location contains Australia`.
pub fn linearize_triple(graph: &KnowledgeGraph, t: &Triple) -> String {
    let mut parts: Vec<&str> = graph.label(&t.head).split_whitespace().collect();
    parts.extend(relation_tokens(&t.relation));
    parts.extend(graph.value_text(&t.tail).split_whitespace());
    parts.join(" ")
}

/// One document per entity with outgoing triples, sorted by head id. Sentences are
/// ordered by (relation, tail text) and the text is cut at `max_words` whole words.
pub fn linearize_documents(graph: &KnowledgeGraph, max_words: usize) -> Vec<EntityDocument> {
    let max_words = max_words.max(1);
    let mut heads: Vec<&EntityId> = graph.by_head.keys().collect();
    heads.sort();
    heads
        .into_iter()
        .map(|head| {
            let mut ts: Vec<&Triple> = graph.with_head(head).collect();
            ts.sort_by(|a, b| {
                (&a.relation, graph.value_text(&a.tail), &a.tail).cmp(&(
                    &b.relation,
                    graph.value_text(&b.tail),
                    &b.tail,
                ))
            });
            let mut words: Vec<String> = Vec::new();
            let mut tails = Vec::new();
            for t in ts {
                if words.len() >= max_words {
                    break;
                }
                let sentence = linearize_triple(graph, t);
                words.extend(sentence.split_whitespace().map(str::to_string));
                tails.push(t.tail.clone());
            }
            words.truncate(max_words);
            EntityDocument {
                head: head.clone(),
                word_count: words.len(),
                text: words.join(" "),
                tails,
            }
        })
        .collect()
}

/// Relations on triples incident to the given entities, plus relations incident to
/// their one-hop neighbours (edges followed in either direction).
pub fn two_hop_relations<'a, I>(graph: &KnowledgeGraph, entities: I) -> Result<BTreeSet<String>, KgError>
where
    I: IntoIterator<Item = &'a EntityId>,
{
    let mut out = BTreeSet::new();
    let mut frontier: BTreeSet<&EntityId> = BTreeSet::new();
    for e in entities {
        if !graph.contains_entity(e) {
            return Err(KgError::UnknownEntity(e.to_string()));
        }
        frontier.insert(e);
    }
    let mut neighbours: BTreeSet<&EntityId> = BTreeSet::new();
    let tail_key = |e: &EntityId| Value::Entity(e.clone());
    for e in &frontier {
        for t in graph.with_head(e) {
            out.insert(t.relation.clone());
            if let Value::Entity(n) = &t.tail {
                neighbours.insert(n);
            }
        }
        for t in graph.with_tail(&tail_key(e)) {
            out.insert(t.relation.clone());
            neighbours.insert(&t.head);
        }
    }
    for n in neighbours {
        for t in graph.with_head(n) {
            out.insert(t.relation.clone());
        }
        for t in graph.with_tail(&tail_key(n)) {
            out.insert(t.relation.clone());
        }
    }
    Ok(out)
}
