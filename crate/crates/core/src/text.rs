//! Small text utilities shared by linking, linearization and refinement.

use std::collections::HashMap;

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn casefold(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits a hierarchical relation name (`a.b_c.d`) into its word tokens.
pub fn relation_tokens(relation: &str) -> Vec<&str> {
    relation
        .split(['.', '_'])
        .filter(|t| !t.is_empty())
        .collect()
}

/// A case-folded word together with its byte span in the source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Whitespace tokenization with leading/trailing punctuation trimmed from each word.
/// Words that are pure punctuation are dropped.
pub fn words_with_spans(s: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in s.split_inclusive(char::is_whitespace) {
        let start = offset;
        offset += raw.len();
        let token = raw.trim_end_matches(char::is_whitespace);
        let lead = token.len() - token.trim_start_matches(is_edge_punct).len();
        let trimmed = token.trim_matches(is_edge_punct);
        if trimmed.is_empty() {
            continue;
        }
        let begin = start + lead;
        out.push(Word {
            text: trimmed.to_lowercase(),
            start: begin,
            end: begin + trimmed.len(),
        });
    }
    out
}

fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '[' && c != ']'
}

/// Case-folded words of `s` (see [`words_with_spans`]).
pub fn words(s: &str) -> Vec<String> {
    words_with_spans(s).into_iter().map(|w| w.text).collect()
}

/// Character trigram counts of the case-folded string, padded with two spaces on each side.
pub fn trigrams(s: &str) -> HashMap<String, u32> {
    let folded = casefold(s);
    let mut counts = HashMap::new();
    if folded.is_empty() {
        return counts;
    }
    let padded: Vec<char> = "  "
        .chars()
        .chain(folded.chars())
        .chain("  ".chars())
        .collect();
    for w in padded.windows(3) {
        *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity between two trigram count vectors.
pub fn count_cosine(a: &HashMap<String, u32>, b: &HashMap<String, u32>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, &x)| large.get(k).map(|&y| f64::from(x) * f64::from(y)))
        .sum();
    let na: f64 = a.values().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Character-trigram cosine similarity of two strings, case-insensitive.
pub fn trigram_cosine(a: &str, b: &str) -> f64 {
    if casefold(a) == casefold(b) && !a.trim().is_empty() {
        return 1.0;
    }
    count_cosine(&trigrams(a), &trigrams(b))
}
