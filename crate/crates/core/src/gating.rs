//! Relevance gating and prompt assembly.
//!
//! The same two-layer MLP maps the question token embeddings and the consistency
//! tokens; their similarity matrix averaged over question positions gives one soft gate
//! per retrieved item. Gated tokens are stacked after trainable soft tokens and before
//! the question embedding.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{align, embed_texts, AlignedVars, AlignmentParams, AlignmentVars, ConsistencyTokens, TokenEmbedder};
use crate::kg::KnowledgeGraph;
use crate::num::Scalar;
use crate::retrieval::{RetrievalBundle, ScoredItem, TrainReport};
use crate::sexpr::{resolve_entity, SExpr};
use crate::tensor::{Adam, Matrix, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatingError {
    #[error("empty training set")]
    EmptyDataset,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// `w2 · relu(w1 · x + b1) + b2`, row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedMlp<T> {
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl<T: Scalar> SharedMlp<T> {
    pub fn zeros(e: usize) -> Self {
        SharedMlp {
            w1: Matrix::zeros(e, e),
            b1: Matrix::zeros(1, e),
            w2: Matrix::zeros(e, e),
            b2: Matrix::zeros(1, e),
        }
    }

    /// Identity weights, zero biases: maps `x` to `relu(x)`.
    pub fn identity(e: usize) -> Self {
        SharedMlp {
            w1: Matrix::identity(e),
            b1: Matrix::zeros(1, e),
            w2: Matrix::identity(e),
            b2: Matrix::zeros(1, e),
        }
    }

    /// Identity plus `N(0, std²)` noise on both weight matrices.
    pub fn near_identity<R: Rng + ?Sized>(e: usize, std: f64, rng: &mut R) -> Self {
        let mut m = Self::identity(e);
        m.w1 = m.w1.add(&Matrix::random_normal(e, e, std, rng)).expect("square");
        m.w2 = m.w2.add(&Matrix::random_normal(e, e, std, rng)).expect("square");
        m
    }

    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> MlpVars {
        MlpVars {
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
        }
    }
}

impl MlpVars {
    pub fn from_slice(v: &[Var]) -> Self {
        MlpVars {
            w1: v[0],
            b1: v[1],
            w2: v[2],
            b2: v[3],
        }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var, TensorError> {
        let h = tape.matmul(x, self.w1)?;
        let h = tape.add_row(h, self.b1)?;
        let h = tape.relu(h);
        let o = tape.matmul(h, self.w2)?;
        tape.add_row(o, self.b2)
    }
}

/// Handles produced by [`relevance_gate`].
#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub q_m: Var,
    pub x_c: Var,
    /// t_k × l similarity matrix
    pub g_sim: Var,
    /// t_k × 1 pre-sigmoid means
    pub logits: Var,
    /// t_k × 1 gates
    pub g: Var,
}

/// `g = sigmoid(mean_l(mlp(X_c) · mlp(Q_e)ᵀ))`.
pub fn relevance_gate<T: Scalar>(tape: &mut Tape<T>, q_e: Var, x_c: Var, mlp: &MlpVars) -> Result<GateVars, TensorError> {
    let (qs, xs) = (tape.shape(q_e), tape.shape(x_c));
    if qs.1 != xs.1 {
        return Err(TensorError::Shape {
            op: "relevance_gate",
            left: qs,
            right: xs,
        });
    }
    let q_m = mlp.apply(tape, q_e)?;
    let x_m = mlp.apply(tape, x_c)?;
    let qt = tape.transpose(q_m);
    let g_sim = tape.matmul(x_m, qt)?;
    let logits = tape.mean_cols(g_sim);
    let g = tape.sigmoid(logits);
    Ok(GateVars {
        q_m,
        x_c: x_m,
        g_sim,
        logits,
        g,
    })
}

/// Row i of `x_c` scaled by `g[i]`.
pub fn apply_gate<T: Scalar>(tape: &mut Tape<T>, g: Var, x_c: Var) -> Result<Var, TensorError> {
    tape.scale_rows(g, x_c)
}

/// `[p; e_c^w; r_c^w; s_c^w; Q_e]` stacked row-wise.
pub fn assemble_prompt<T: Scalar>(
    tape: &mut Tape<T>,
    p: Var,
    e_w: Var,
    r_w: Var,
    s_w: Var,
    q_e: Var,
) -> Result<Var, TensorError> {
    tape.concat_rows(&[p, e_w, r_w, s_w, q_e])
}

/// Trainable prompt rows prepended to the assembled input.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTokens<T> {
    pub p: Matrix<T>,
}

impl<T: Scalar> SoftTokens<T> {
    pub fn random<R: Rng + ?Sized>(l_p: usize, e: usize, std: f64, rng: &mut R) -> Self {
        SoftTokens {
            p: Matrix::random_normal(l_p, e, std, rng),
        }
    }

    pub fn len(&self) -> usize {
        self.p.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.rows() == 0
    }
}

/// Per-aspect gate vectors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GateScores {
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
    pub subgraphs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub dim: usize,
    pub hidden: usize,
    pub buckets: usize,
    pub entity_len: usize,
    pub relation_len: usize,
    pub subgraph_len: usize,
    pub question_len: usize,
    pub soft_tokens: usize,
    pub init_std: f64,
    /// Diagonal scale of the query/key weights at initialization.
    pub attention_gamma: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            dim: 64,
            hidden: 16,
            buckets: 4096,
            entity_len: 8,
            relation_len: 8,
            subgraph_len: 100,
            question_len: 32,
            soft_tokens: 7,
            init_std: 0.02,
            attention_gamma: 1.0,
            lr: 0.002,
            seed: 42,
        }
    }
}

/// Alignment + gating parameters, the frozen token table and the soft tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter<T> {
    pub config: AdapterConfig,
    pub embedder: TokenEmbedder<T>,
    pub align: AlignmentParams<T>,
    pub shared: SharedMlp<T>,
    pub soft: SoftTokens<T>,
}

/// Tape handles of one full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct StackVars {
    pub aligned: AlignedVars,
    pub q_e: Var,
    pub entity_gate: GateVars,
    pub relation_gate: GateVars,
    pub subgraph_gate: GateVars,
    pub prompt: Var,
}

impl StackVars {
    pub fn gates(&self) -> [GateVars; 3] {
        [self.entity_gate, self.relation_gate, self.subgraph_gate]
    }
}

/// Evaluated outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterOutput<T> {
    pub tokens: ConsistencyTokens<T>,
    pub x_t: [Matrix<T>; 3],
    pub g_sim: [Matrix<T>; 3],
    pub gates: GateScores,
    pub prompt: Matrix<T>,
}

fn item_texts(items: &[ScoredItem]) -> Vec<&str> {
    items.iter().map(|i| i.text.as_str()).collect()
}

fn column(m: &Matrix<impl Scalar>) -> Vec<f64> {
    m.data().iter().map(|x| x.as_f64()).collect()
}

impl<T: Scalar> Adapter<T> {
    pub fn new(config: AdapterConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (e, d) = (config.dim, config.hidden);
        Adapter {
            config,
            embedder: TokenEmbedder::new(config.buckets, e, config.seed),
            align: AlignmentParams::new(e, d, config.attention_gamma, config.init_std, &mut rng),
            shared: SharedMlp::near_identity(e, config.init_std, &mut rng),
            soft: SoftTokens::random(config.soft_tokens, e, config.init_std, &mut rng),
        }
    }

    /// Trainable matrices in binding order: alignment, shared MLP, soft tokens.
    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        let mut v = self.align.matrices();
        v.extend(self.shared.matrices());
        v.push(&self.soft.p);
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = self.align.matrices_mut();
        v.extend(self.shared.matrices_mut());
        v.push(&mut self.soft.p);
        v
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.matrices().into_iter().map(|m| tape.leaf(m.clone())).collect()
    }

    /// Full forward pass with parameters taken from `params` (as returned by [`Adapter::bind`]).
    pub fn stack(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        question: &str,
        bundle: &RetrievalBundle,
    ) -> Result<StackVars, TensorError> {
        let n = AlignmentParams::<T>::MATRICES;
        let av = AlignmentVars::from_slice(&params[..n]);
        let mlp = MlpVars::from_slice(&params[n..n + 4]);
        let p = params[n + 4];
        let c = &self.config;
        let xe = embed_texts(&item_texts(&bundle.entities), &self.embedder, c.entity_len);
        let xr = embed_texts(&item_texts(&bundle.relations), &self.embedder, c.relation_len);
        let xs = embed_texts(&item_texts(&bundle.subgraphs), &self.embedder, c.subgraph_len);
        let aligned = align(tape, &av, &xe, &xr, &xs)?;
        let q = embed_texts(&[question], &self.embedder, c.question_len);
        let q_e = tape.leaf(q.data);
        let entity_gate = relevance_gate(tape, q_e, aligned.e_c, &mlp)?;
        let relation_gate = relevance_gate(tape, q_e, aligned.r_c, &mlp)?;
        let subgraph_gate = relevance_gate(tape, q_e, aligned.cross.s_c, &mlp)?;
        let e_w = apply_gate(tape, entity_gate.g, aligned.e_c)?;
        let r_w = apply_gate(tape, relation_gate.g, aligned.r_c)?;
        let s_w = apply_gate(tape, subgraph_gate.g, aligned.cross.s_c)?;
        let prompt = assemble_prompt(tape, p, e_w, r_w, s_w, q_e)?;
        Ok(StackVars {
            aligned,
            q_e,
            entity_gate,
            relation_gate,
            subgraph_gate,
            prompt,
        })
    }

    pub fn forward(&self, question: &str, bundle: &RetrievalBundle) -> Result<AdapterOutput<T>, TensorError> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let s = self.stack(&mut tape, &params, question, bundle)?;
        let v = |x: Var| tape.value(x).clone();
        Ok(AdapterOutput {
            tokens: ConsistencyTokens {
                e_c: v(s.aligned.e_c),
                r_c: v(s.aligned.r_c),
                s_c: v(s.aligned.cross.s_c),
                s_c_e: v(s.aligned.cross.s_c_e),
                s_c_r: v(s.aligned.cross.s_c_r),
            },
            x_t: [v(s.aligned.e_t), v(s.aligned.r_t), v(s.aligned.s_t)],
            g_sim: [v(s.entity_gate.g_sim), v(s.relation_gate.g_sim), v(s.subgraph_gate.g_sim)],
            gates: GateScores {
                entities: column(tape.value(s.entity_gate.g)),
                relations: column(tape.value(s.relation_gate.g)),
                subgraphs: column(tape.value(s.subgraph_gate.g)),
            },
            prompt: v(s.prompt),
        })
    }

    pub fn gates(&self, question: &str, bundle: &RetrievalBundle) -> Result<GateScores, TensorError> {
        self.forward(question, bundle).map(|o| o.gates)
    }
}

/// Relevance targets of one aspect; padding items carry weight 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AspectTargets {
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterExample {
    pub question: String,
    pub bundle: RetrievalBundle,
    pub targets: [AspectTargets; 3],
}

/// An item is relevant iff its id occurs in the gold form; a subgraph document is
/// relevant iff its head entity does.
pub fn surrogate_targets(bundle: &RetrievalBundle, gold: &SExpr, graph: &KnowledgeGraph) -> [AspectTargets; 3] {
    let entities: BTreeSet<String> = gold
        .entities()
        .into_iter()
        .filter_map(|e| resolve_entity(e, graph).ok())
        .map(|id| id.to_string())
        .collect();
    let relations: BTreeSet<String> = gold.relations().into_iter().map(str::to_string).collect();
    let mark = |items: &[ScoredItem], gold: &BTreeSet<String>| {
        let mut t = AspectTargets::default();
        for it in items {
            let hit = it.id.as_ref().is_some_and(|id| gold.contains(id));
            t.targets.push(if hit { 1.0 } else { 0.0 });
            t.weights.push(if it.is_padding() { 0.0 } else { 1.0 });
        }
        t
    };
    [
        mark(&bundle.entities, &entities),
        mark(&bundle.relations, &relations),
        mark(&bundle.subgraphs, &entities),
    ]
}

/// Mean over the three aspects of the weighted gate BCE.
pub fn surrogate_loss<T: Scalar>(tape: &mut Tape<T>, s: &StackVars, targets: &[AspectTargets; 3]) -> Result<Var, TensorError> {
    let mut parts = Vec::new();
    for (g, t) in s.gates().iter().zip(targets) {
        let y: Vec<T> = t.targets.iter().map(|&x| T::lit(x)).collect();
        let w: Vec<T> = t.weights.iter().map(|&x| T::lit(x)).collect();
        parts.push(tape.bce_with_logits(g.logits, &y, &w)?);
    }
    let all = tape.concat_rows(&parts)?;
    Ok(tape.mean_all(all))
}

/// Adam on the surrogate objective; one example per step, shuffled per epoch.
/// A non-finite loss aborts training.
pub fn train_adapter<T: Scalar>(
    adapter: Adapter<T>,
    data: &[AdapterExample],
    epochs: usize,
    seed: u64,
) -> Result<(Adapter<T>, TrainReport), GatingError> {
    if data.is_empty() {
        return Err(GatingError::EmptyDataset);
    }
    let mut ad = adapter;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<(usize, usize)> = ad.matrices().iter().map(|m| m.shape()).collect();
    let mut opt = Adam::new(ad.config.lr, &shapes);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = &data[i];
            let mut tape = Tape::new();
            let params = ad.bind(&mut tape);
            let s = ad.stack(&mut tape, &params, &ex.question, &ex.bundle)?;
            let loss = surrogate_loss(&mut tape, &s, &ex.targets)?;
            let l = tape.value(loss).get(0, 0).as_f64();
            if !l.is_finite() {
                return Err(TensorError::NonFinite(format!("adapter loss {l}")).into());
            }
            total += l;
            let grads = tape.backward(loss)?;
            let g: Vec<Matrix<T>> = params.iter().map(|v| grads.get(*v)).collect();
            opt.step(ad.matrices_mut(), &g);
        }
        report.losses.push(total / data.len() as f64);
    }
    Ok((ad, report))
}
