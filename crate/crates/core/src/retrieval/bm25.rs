use std::collections::{BTreeSet, HashMap};

use super::{rank_order, ScoredItem};
use crate::kg::EntityDocument;
use crate::text::words;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 over case-folded whitespace tokens.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    doc_len: Vec<usize>,
    avgdl: f64,
    /// term -> (doc index, term frequency)
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn new<'a>(docs: impl IntoIterator<Item = &'a str>, k1: f64, b: f64) -> Self {
        assert!(k1 > 0.0 && (0.0..=1.0).contains(&b), "BM25 needs k1 > 0 and 0 <= b <= 1");
        let mut doc_len = Vec::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (i, d) in docs.into_iter().enumerate() {
            let toks = words(d);
            doc_len.push(toks.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
        }
        let avgdl = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64
        };
        Bm25Index {
            k1,
            b,
            doc_len,
            avgdl,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_len.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Scores of every document for the query; distinct query terms are counted once.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let terms: BTreeSet<String> = words(query).into_iter().collect();
        for t in &terms {
            let Some(post) = self.postings.get(t) else { continue };
            let idf = self.idf(t);
            for &(d, tf) in post {
                let tf = tf as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[d] as f64 / self.avgdl);
                out[d] += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        out
    }

    /// Top-k `(doc index, score)`; ties keep corpus order.
    pub fn search(&self, query: &str, k: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self.scores(query).into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

/// Ranks documents by BM25; ties broken by text, then corpus order.
pub fn bm25_retrieve(question: &str, documents: &[EntityDocument], k: usize, k1: f64, b: f64) -> Vec<ScoredItem> {
    if documents.is_empty() {
        return Vec::new();
    }
    let index = Bm25Index::new(documents.iter().map(|d| d.text.as_str()), k1, b);
    let mut items: Vec<(usize, ScoredItem)> = index
        .scores(question)
        .into_iter()
        .zip(documents)
        .enumerate()
        .map(|(i, (s, d))| (i, ScoredItem::new(d.text.clone(), Some(d.head.to_string()), s)))
        .collect();
    items.sort_by(|a, b| rank_order(&a.1, &b.1).then(a.0.cmp(&b.0)));
    items.into_iter().take(k).map(|(_, s)| s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unseen_term_scores_zero() {
        let idx = Bm25Index::new(["a b c", "b c d"], DEFAULT_K1, DEFAULT_B);
        assert_eq!(idx.scores("zzz"), vec![0.0, 0.0]);
    }

    #[test]
    fn duplicates_tie() {
        let idx = Bm25Index::new(["a b", "a b", "c"], DEFAULT_K1, DEFAULT_B);
        let s = idx.scores("a");
        assert_eq!(s[0], s[1]);
        assert_eq!(idx.search("a", 2), vec![(0, s[0]), (1, s[1])]);
    }
}
