use std::collections::{BTreeSet, HashMap};
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pad_to, rank_order, RetrievalError, ScoredItem};
use crate::kg::KnowledgeGraph;
use crate::num::Scalar;
use crate::tensor::{sigmoid_scalar, Matrix, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub buckets: usize,
    pub dim: usize,
    pub seed: u64,
    pub lr: f64,
    /// Multiplier on dot-product scores inside the training softmax.
    pub logit_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            buckets: 1 << 14,
            dim: 64,
            seed: 42,
            lr: 0.5,
            logit_scale: 10.0,
        }
    }
}

/// Subword tokens of a question or relation name: case-folded words (relation names are
/// split on `.` and `_`) plus boundary-marked character trigrams. Deduplicated and sorted.
pub fn encoder_tokens(text: &str) -> Vec<String> {
    let mut out = BTreeSet::new();
    for raw in text.split(|c: char| c.is_whitespace() || c == '.' || c == '_') {
        let w = raw.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase();
        if w.is_empty() || w == "blank" && raw.contains('[') {
            continue;
        }
        let marked: Vec<char> = format!("<{w}>").chars().collect();
        for g in marked.windows(3) {
            out.insert(format!("#{}", g.iter().collect::<String>()));
        }
        out.insert(w);
    }
    out.into_iter().collect()
}

fn bucket(token: &str, buckets: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % buckets as u64) as usize
}

/// Hashed-subword bag encoder: mean of seeded random bucket vectors, a trainable d×d
/// projection, then L2 normalization. Questions and relations share all parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationEncoder<T> {
    config: EncoderConfig,
    table: Matrix<T>,
    projection: Matrix<T>,
    trained: bool,
}

impl<T: Scalar> RelationEncoder<T> {
    pub fn new(config: EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let table = Matrix::random_normal(config.buckets, config.dim, 1.0, &mut rng);
        RelationEncoder {
            config,
            table,
            projection: Matrix::identity(config.dim),
            trained: false,
        }
    }

    /// Rebuilds an encoder from a saved projection; the bucket table is regenerated from the seed.
    pub fn from_parts(config: EncoderConfig, projection: Matrix<T>, trained: bool) -> Result<Self, RetrievalError> {
        if projection.shape() != (config.dim, config.dim) {
            return Err(crate::tensor::TensorError::Shape {
                op: "encoder projection",
                left: projection.shape(),
                right: (config.dim, config.dim),
            }
            .into());
        }
        let mut e = Self::new(config);
        e.projection = projection;
        e.trained = trained;
        Ok(e)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn projection(&self) -> &Matrix<T> {
        &self.projection
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Un-projected bag-of-subwords feature row (1×d); zero for token-less input.
    pub fn features(&self, text: &str) -> Matrix<T> {
        let toks = encoder_tokens(text);
        let mut out = Matrix::zeros(1, self.config.dim);
        if toks.is_empty() {
            return out;
        }
        let inv = T::one() / T::lit(toks.len() as f64);
        for t in &toks {
            let row = self.table.row(bucket(t, self.config.buckets));
            for (o, &x) in out.row_mut(0).iter_mut().zip(row) {
                *o += x * inv;
            }
        }
        out
    }

    /// Unit-norm encoding (zero vector for empty input).
    pub fn encode(&self, text: &str) -> Vec<T> {
        let mut v = self
            .features(text)
            .matmul(&self.projection)
            .expect("projection is d×d")
            .into_data();
        let n = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if n > T::zero() {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }

    /// Dot-product similarity `v_q · v_r`.
    pub fn score(&self, question: &str, relation: &str) -> T {
        dot(&self.encode(question), &self.encode(relation))
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// One relation-retrieval training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationExample {
    pub question: String,
    pub gold: Vec<String>,
    pub pool: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per epoch.
    pub losses: Vec<f64>,
}

fn check_dataset(data: &[RelationExample]) -> Result<(), RetrievalError> {
    if data.is_empty() {
        return Err(RetrievalError::EmptyDataset);
    }
    for ex in data {
        if let Some(g) = ex.gold.iter().find(|g| !ex.pool.contains(g)) {
            return Err(RetrievalError::GoldNotInPool(g.clone()));
        }
    }
    Ok(())
}

fn negatives<'a>(ex: &'a RelationExample, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a String> {
    let others: Vec<&String> = ex.pool.iter().filter(|r| !ex.gold.contains(r)).collect();
    others.choose_multiple(rng, n).copied().collect()
}

struct FeatureCache<'e, T> {
    enc: &'e RelationEncoder<T>,
    map: HashMap<String, Matrix<T>>,
}

impl<T: Scalar> FeatureCache<'_, T> {
    fn stacked(&mut self, texts: &[&String]) -> Matrix<T> {
        let rows: Vec<Vec<T>> = texts
            .iter()
            .map(|t| {
                self.map
                    .entry((*t).clone())
                    .or_insert_with(|| self.enc.features(t))
                    .data()
                    .to_vec()
            })
            .collect();
        let mut m = Matrix::from_rows(&rows).expect("equal width");
        if rows.is_empty() {
            m = Matrix::zeros(0, self.enc.dim());
        }
        m
    }
}

/// Trains the projection with softmax cross-entropy over `{gold} ∪ sampled negatives`
/// per gold relation, by plain SGD. Deterministic in `seed`.
pub fn train_relation_encoder<T: Scalar>(
    encoder: RelationEncoder<T>,
    data: &[RelationExample],
    epochs: usize,
    negatives_per_positive: usize,
    seed: u64,
) -> Result<(RelationEncoder<T>, TrainReport), RetrievalError> {
    check_dataset(data)?;
    let mut enc = encoder;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frozen = enc.clone();
    let mut cache = FeatureCache {
        enc: &frozen,
        map: HashMap::new(),
    };
    let lr = T::lit(enc.config.lr);
    let scale = T::lit(enc.config.logit_scale);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for &i in &order {
            let ex = &data[i];
            let fq = cache.stacked(&[&ex.question]);
            for g in &ex.gold {
                let mut cands = vec![g];
                cands.extend(negatives(ex, negatives_per_positive, &mut rng));
                let fr = cache.stacked(&cands);
                let mut tape = Tape::new();
                let w = tape.leaf(enc.projection.clone());
                let q = tape.leaf(fq.clone());
                let r = tape.leaf(fr);
                let qp = tape.matmul(q, w)?;
                let rp = tape.matmul(r, w)?;
                let qn = tape.l2_normalize_rows(qp);
                let rn = tape.l2_normalize_rows(rp);
                let qt = tape.transpose(qn);
                let s = tape.matmul(rn, qt)?;
                let st = tape.transpose(s);
                let logits = tape.scale(st, scale);
                let loss = tape.cross_entropy_rows(logits, &[0])?;
                total += tape.value(loss).get(0, 0).as_f64();
                count += 1;
                let dw = tape.backward(loss)?.get(w);
                enc.projection = enc.projection.sub(&dw.scale(lr))?;
            }
        }
        report.losses.push(if count == 0 { 0.0 } else { total / count as f64 });
    }
    if epochs > 0 {
        enc.trained = true;
    }
    Ok((enc, report))
}

/// Bilinear relevance model `sigmoid(v_qᵀ M v_r + b)` over encoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossScorer<T> {
    pub weights: Matrix<T>,
    pub bias: T,
}

impl<T: Scalar> CrossScorer<T> {
    pub fn zeros(dim: usize) -> Self {
        CrossScorer {
            weights: Matrix::zeros(dim, dim),
            bias: T::zero(),
        }
    }
}

/// Probability that `relation` is relevant to `question`.
pub fn cross_score<T: Scalar>(scorer: &CrossScorer<T>, encoder: &RelationEncoder<T>, question: &str, relation: &str) -> T {
    let q = encoder.encode(question);
    let r = encoder.encode(relation);
    let mut z = scorer.bias;
    for (i, &qi) in q.iter().enumerate() {
        if qi != T::zero() {
            z += qi * dot(scorer.weights.row(i), &r);
        }
    }
    sigmoid_scalar(z)
}

/// Fits the cross-scorer with binary cross-entropy: gold relations are positives,
/// `negatives_per_positive` sampled pool relations per gold are negatives.
pub fn train_cross_scorer<T: Scalar>(
    scorer: CrossScorer<T>,
    encoder: &RelationEncoder<T>,
    data: &[RelationExample],
    epochs: usize,
    negatives_per_positive: usize,
    seed: u64,
    lr: f64,
) -> Result<(CrossScorer<T>, TrainReport), RetrievalError> {
    check_dataset(data)?;
    let mut sc = scorer;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lr = T::lit(lr);
    let mut enc_cache: HashMap<String, Vec<T>> = HashMap::new();
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = &data[i];
            let mut pairs: Vec<(&str, T)> = Vec::new();
            for g in &ex.gold {
                pairs.push((g, T::one()));
                for n in negatives(ex, negatives_per_positive, &mut rng) {
                    pairs.push((n, T::zero()));
                }
            }
            let mut enc = |t: &str| -> Vec<T> {
                enc_cache
                    .entry(t.to_string())
                    .or_insert_with(|| encoder.encode(t))
                    .clone()
            };
            let vq = Matrix::new(1, encoder.dim(), enc(&ex.question))?;
            let rows: Vec<Vec<T>> = pairs.iter().map(|(r, _)| enc(r)).collect();
            let vr = Matrix::from_rows(&rows)?;
            let targets: Vec<T> = pairs.iter().map(|p| p.1).collect();
            let ones = vec![T::one(); targets.len()];

            let mut tape = Tape::new();
            let m = tape.leaf(sc.weights.clone());
            let b = tape.leaf(Matrix::filled(1, 1, sc.bias));
            let q = tape.leaf(vq);
            let r = tape.leaf(vr);
            let qm = tape.matmul(q, m)?;
            let qmt = tape.transpose(qm);
            let z = tape.matmul(r, qmt)?;
            let z = tape.add_row(z, b)?;
            let loss = tape.bce_with_logits(z, &targets, &ones)?;
            total += tape.value(loss).get(0, 0).as_f64();
            let grads = tape.backward(loss)?;
            sc.weights = sc.weights.sub(&grads.get(m).scale(lr))?;
            sc.bias -= lr * grads.get(b).get(0, 0);
        }
        report.losses.push(total / data.len() as f64);
    }
    Ok((sc, report))
}

/// Ranks every relation of the graph by `v_q · v_r`. With a scorer, the top `4k` are
/// rescored by [`cross_score`] and re-sorted. The result is padded to exactly `k`.
pub fn retrieve_relations<T: Scalar>(
    encoder: &RelationEncoder<T>,
    scorer: Option<&CrossScorer<T>>,
    question: &str,
    graph: &KnowledgeGraph,
    k: usize,
) -> Vec<ScoredItem> {
    let vq = encoder.encode(question);
    let mut items: Vec<ScoredItem> = graph
        .relations()
        .map(|r| {
            let s = dot(&vq, &encoder.encode(r)).as_f64();
            ScoredItem::new(r, Some(r.to_string()), s)
        })
        .collect();
    items.sort_by(rank_order);
    if let Some(sc) = scorer {
        items.truncate(4 * k);
        for it in &mut items {
            it.score = cross_score(sc, encoder, question, &it.text).as_f64();
        }
        items.sort_by(rank_order);
    }
    pad_to(items, k)
}
