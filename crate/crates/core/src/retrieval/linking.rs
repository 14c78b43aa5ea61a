use std::collections::HashMap;

use super::{rank_order, RetrievalError, ScoredItem};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::text::{count_cosine, trigrams, words_with_spans};

pub const MAX_NGRAM: usize = 5;
pub const FUZZY_THRESHOLD: f64 = 0.8;
/// Spans shorter than this (in characters) never enter the fuzzy fallback.
const FUZZY_MIN_CHARS: usize = 4;

/// Links question n-grams (n ≤ 5) to entities through the alias index.
///
/// Exact alias hits score `n / |question words| × ln(1 + popularity)`. Spans whose words
/// are not covered by any exact hit are compared against every alias by trigram cosine
/// and kept at ≥ 0.8, with the cosine as an extra factor. Scores are divided by the best
/// raw score; each entity keeps its best mention.
pub fn link_entities(question: &str, graph: &KnowledgeGraph, k: usize) -> Vec<ScoredItem> {
    let words = words_with_spans(question);
    let n_words = words.len();
    if n_words == 0 || k == 0 {
        return Vec::new();
    }
    let mut best: HashMap<EntityId, (f64, (usize, usize))> = HashMap::new();
    let mut offer = |id: &EntityId, score: f64, span: (usize, usize)| {
        let e = best.entry(id.clone()).or_insert((score, span));
        if score > e.0 || (score == e.0 && (span.1 - span.0) > (e.1 .1 - e.1 .0)) {
            *e = (score, span);
        }
    };
    let mut covered = vec![false; n_words];
    let ngrams = |n: usize| (0..=n_words.saturating_sub(n)).filter(move |_| n <= n_words);

    for n in (1..=MAX_NGRAM).rev() {
        for i in ngrams(n) {
            let key = words[i..i + n].iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
            let hits = graph.alias_entries(&key);
            if hits.is_empty() {
                continue;
            }
            let span = (words[i].start, words[i + n - 1].end);
            let ratio = n as f64 / n_words as f64;
            for h in hits {
                offer(&h.entity, ratio * h.popularity.ln_1p(), span);
            }
            covered[i..i + n].iter_mut().for_each(|c| *c = true);
        }
    }

    let alias_grams: Vec<(&str, HashMap<String, u32>)> =
        graph.aliases().map(|(a, _)| (a, trigrams(a))).collect();
    for n in (1..=MAX_NGRAM).rev() {
        for i in ngrams(n) {
            if covered[i..i + n].iter().any(|&c| c) {
                continue;
            }
            let span = (words[i].start, words[i + n - 1].end);
            let surface = &question[span.0..span.1];
            if surface.chars().count() < FUZZY_MIN_CHARS {
                continue;
            }
            let grams = trigrams(surface);
            let ratio = n as f64 / n_words as f64;
            for (alias, ag) in &alias_grams {
                let cos = count_cosine(&grams, ag);
                if cos >= FUZZY_THRESHOLD {
                    for h in graph.alias_entries(alias) {
                        offer(&h.entity, ratio * cos * h.popularity.ln_1p(), span);
                    }
                }
            }
        }
    }

    let top = best.values().map(|v| v.0).fold(0.0, f64::max);
    let mut items: Vec<ScoredItem> = best
        .into_iter()
        .map(|(id, (s, span))| ScoredItem {
            text: graph.label(&id).to_string(),
            score: if top > 0.0 { s / top } else { 0.0 },
            id: Some(id.to_string()),
            mention: Some(span),
        })
        .collect();
    items.sort_by(rank_order);
    items.truncate(k);
    items
}

/// Greedy disjoint mention spans from a ranked linking result, best first.
pub fn mention_spans(items: &[ScoredItem]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for span in items.iter().filter_map(|i| i.mention) {
        if out.iter().all(|o| span.1 <= o.0 || o.1 <= span.0) {
            out.push(span);
        }
    }
    out
}

/// Replaces each byte span with `[BLANK]` and collapses whitespace.
pub fn mask_question(question: &str, mentions: &[(usize, usize)]) -> Result<String, RetrievalError> {
    let mut spans = mentions.to_vec();
    spans.sort();
    for &s in &spans {
        if s.0 > s.1
            || s.1 > question.len()
            || !question.is_char_boundary(s.0)
            || !question.is_char_boundary(s.1)
        {
            return Err(RetrievalError::SpanOutOfBounds(s));
        }
    }
    for w in spans.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(RetrievalError::OverlappingSpans(w[0], w[1]));
        }
    }
    let mut out = String::with_capacity(question.len());
    let mut at = 0;
    for (a, b) in spans {
        out.push_str(&question[at..a]);
        out.push_str(" [BLANK] ");
        at = b;
    }
    out.push_str(&question[at..]);
    Ok(out.split_whitespace().collect::<Vec<_>>().join(" "))
}
