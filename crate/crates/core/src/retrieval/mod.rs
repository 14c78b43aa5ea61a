//! Multi-aspect retrieval: entities via alias linking, relations via a hashed-subword
//! bi-encoder (optionally reranked by a bilinear cross-scorer), and 1-hop subgraph
//! documents via BM25.

mod bm25;
mod encoder;
mod linking;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{linearize_documents, EntityDocument, KnowledgeGraph};
use crate::num::Scalar;

pub use bm25::{bm25_retrieve, Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use encoder::{
    cross_score, encoder_tokens, retrieve_relations, train_cross_scorer, train_relation_encoder, CrossScorer,
    EncoderConfig, RelationEncoder, RelationExample, TrainReport,
};
pub use linking::{link_entities, mask_question, mention_spans, FUZZY_THRESHOLD, MAX_NGRAM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("mention spans {0:?} and {1:?} overlap")]
    OverlappingSpans((usize, usize), (usize, usize)),
    #[error("mention span {0:?} is outside the question or not on a character boundary")]
    SpanOutOfBounds((usize, usize)),
    #[error("empty training set")]
    EmptyDataset,
    #[error("gold relation `{0}` is not in the relation pool")]
    GoldNotInPool(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// One retrieved candidate. `id` is an entity id or relation name; `mention` is the
/// matched question byte span for linked entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub text: String,
    pub id: Option<String>,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mention: Option<(usize, usize)>,
}

impl ScoredItem {
    pub fn new(text: impl Into<String>, id: Option<String>, score: f64) -> Self {
        ScoredItem {
            text: text.into(),
            id,
            score,
            mention: None,
        }
    }

    pub fn padding() -> Self {
        ScoredItem::new("", None, 0.0)
    }

    pub fn is_padding(&self) -> bool {
        self.text.is_empty() && self.id.is_none()
    }
}

/// Descending score, then ascending text, then id.
pub(crate) fn rank_order(a: &ScoredItem, b: &ScoredItem) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| a.id.cmp(&b.id))
}

pub(crate) fn pad_to(mut items: Vec<ScoredItem>, n: usize) -> Vec<ScoredItem> {
    items.truncate(n);
    items.resize_with(n, ScoredItem::padding);
    items
}

/// `|gold ∩ retrieved[..k]| / |gold|`; 1.0 for empty gold.
pub fn recall_at_k<S: AsRef<str>>(gold: &BTreeSet<String>, retrieved: &[S], k: usize) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    let top: BTreeSet<&str> = retrieved.iter().take(k).map(AsRef::as_ref).collect();
    let hits = gold.iter().filter(|g| top.contains(g.as_str())).count();
    hits as f64 / gold.len() as f64
}

/// Per-aspect output of [`Retriever::retrieve`]; each list has exactly its configured length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalBundle {
    pub entities: Vec<ScoredItem>,
    pub relations: Vec<ScoredItem>,
    pub subgraphs: Vec<ScoredItem>,
    pub masked_question: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalConfig {
    pub entities: usize,
    pub relations: usize,
    pub subgraphs: usize,
    pub k1: f64,
    pub b: f64,
    pub max_words: usize,
    pub rerank: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            entities: 8,
            relations: 16,
            subgraphs: 8,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            max_words: crate::kg::DEFAULT_MAX_WORDS,
            rerank: true,
        }
    }
}

/// Holds the per-graph indexes and the trained relation models.
#[derive(Debug, Clone)]
pub struct Retriever<'g, T: Scalar> {
    pub graph: &'g KnowledgeGraph,
    pub documents: Vec<EntityDocument>,
    pub index: Bm25Index,
    pub encoder: RelationEncoder<T>,
    pub scorer: Option<CrossScorer<T>>,
    pub config: RetrievalConfig,
}

impl<'g, T: Scalar> Retriever<'g, T> {
    pub fn new(
        graph: &'g KnowledgeGraph,
        encoder: RelationEncoder<T>,
        scorer: Option<CrossScorer<T>>,
        config: RetrievalConfig,
    ) -> Self {
        let documents = linearize_documents(graph, config.max_words);
        let index = Bm25Index::new(documents.iter().map(|d| d.text.as_str()), config.k1, config.b);
        Retriever {
            graph,
            documents,
            index,
            encoder,
            scorer,
            config,
        }
    }

    pub fn retrieve(&self, question: &str) -> RetrievalBundle {
        let c = &self.config;
        let entities = link_entities(question, self.graph, c.entities);
        let masked_question = mask_question(question, &mention_spans(&entities))
            .expect("mention_spans returns disjoint in-bounds spans");
        let scorer = if c.rerank { self.scorer.as_ref() } else { None };
        let relations = retrieve_relations(&self.encoder, scorer, &masked_question, self.graph, c.relations.max(1));
        let subgraphs = self
            .index
            .search(question, c.subgraphs)
            .into_iter()
            .map(|(i, s)| {
                let d = &self.documents[i];
                ScoredItem::new(d.text.clone(), Some(d.head.to_string()), s)
            })
            .collect();
        RetrievalBundle {
            entities: pad_to(entities, c.entities),
            relations: pad_to(relations, c.relations),
            subgraphs: pad_to(subgraphs, c.subgraphs),
            masked_question,
        }
    }
}
