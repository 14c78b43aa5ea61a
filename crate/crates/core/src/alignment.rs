//! Self-alignment: retrieved texts become one prompt embedding each (mean over tokens,
//! then a bottleneck projector), and attention across texts yields consistency tokens.
//!
//! Entity and relation embeddings each get their own self-attention; subgraph
//! embeddings cross-attend to both and the two results are summed.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::num::Scalar;
use crate::tensor::{attention, Matrix, Tape, TensorError, Var};
use crate::text::words;

/// Seeded hashed token table standing in for a frozen embedding layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedder<T> {
    buckets: usize,
    dim: usize,
    seed: u64,
    table: Matrix<T>,
}

impl<T: Scalar> TokenEmbedder<T> {
    pub fn new(buckets: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e4b3);
        TokenEmbedder {
            buckets,
            dim,
            seed,
            table: Matrix::random_normal(buckets, dim, 1.0, &mut rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn token_row(&self, token: &str) -> &[T] {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        self.table.row((h.finish() % self.buckets as u64) as usize)
    }
}

/// A `texts × len × dim` tensor stored as a `(texts·len) × dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTensor<T> {
    pub texts: usize,
    pub len: usize,
    pub data: Matrix<T>,
}

impl<T: Scalar> TokenTensor<T> {
    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.texts, self.len, self.data.cols())
    }

    /// The `len × dim` slice of text `i`.
    pub fn slice(&self, i: usize) -> Matrix<T> {
        let d = self.dim();
        let start = i * self.len * d;
        Matrix::new(self.len, d, self.data.data()[start..start + self.len * d].to_vec()).expect("in bounds")
    }
}

/// Looks up whitespace tokens of each text, truncated or zero-padded to `len` rows.
pub fn embed_texts<T: Scalar, S: AsRef<str>>(texts: &[S], embedder: &TokenEmbedder<T>, len: usize) -> TokenTensor<T> {
    let mut data = Matrix::zeros(texts.len() * len, embedder.dim);
    for (i, t) in texts.iter().enumerate() {
        for (j, w) in words(t.as_ref()).iter().take(len).enumerate() {
            data.row_mut(i * len + j).copy_from_slice(embedder.token_row(w));
        }
    }
    TokenTensor {
        texts: texts.len(),
        len,
        data,
    }
}

fn xavier<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    Matrix::random_normal(rows, cols, (1.0 / rows.max(1) as f64).sqrt(), rng)
}

/// `γ·I + N(0, std²)`.
fn near_identity<T: Scalar, R: Rng + ?Sized>(n: usize, gamma: f64, std: f64, rng: &mut R) -> Matrix<T> {
    let noise: Matrix<T> = Matrix::random_normal(n, n, std, rng);
    Matrix::identity(n).scale(T::lit(gamma)).add(&noise).expect("square")
}

/// Down/up bottleneck with biases: `up(relu(down(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<T> {
    pub down: Matrix<T>,
    pub down_bias: Matrix<T>,
    pub up: Matrix<T>,
    pub up_bias: Matrix<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectorVars {
    pub down: Var,
    pub down_bias: Var,
    pub up: Var,
    pub up_bias: Var,
}

impl<T: Scalar> Projector<T> {
    pub fn random<R: Rng + ?Sized>(e: usize, d: usize, rng: &mut R) -> Self {
        Projector {
            down: xavier(e, d, rng),
            down_bias: Matrix::zeros(1, d),
            up: xavier(d, e, rng),
            up_bias: Matrix::zeros(1, e),
        }
    }

    pub fn zeros(e: usize, d: usize) -> Self {
        Projector {
            down: Matrix::zeros(e, d),
            down_bias: Matrix::zeros(1, d),
            up: Matrix::zeros(d, e),
            up_bias: Matrix::zeros(1, e),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> ProjectorVars {
        ProjectorVars {
            down: tape.leaf(self.down.clone()),
            down_bias: tape.leaf(self.down_bias.clone()),
            up: tape.leaf(self.up.clone()),
            up_bias: tape.leaf(self.up_bias.clone()),
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        vec![&self.down, &self.down_bias, &self.up, &self.up_bias]
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.down, &mut self.down_bias, &mut self.up, &mut self.up_bias]
    }
}

impl ProjectorVars {
    pub fn from_slice(v: &[Var]) -> Self {
        ProjectorVars {
            down: v[0],
            down_bias: v[1],
            up: v[2],
            up_bias: v[3],
        }
    }
}

/// Mean over each text's `len` token rows, then the projector: `(texts·len)×e → texts×e`.
pub fn pool_project<T: Scalar>(tape: &mut Tape<T>, x_e: Var, len: usize, p: &ProjectorVars) -> Result<Var, TensorError> {
    let pooled = tape.mean_row_blocks(x_e, len)?;
    let h = tape.matmul(pooled, p.down)?;
    let h = tape.add_row(h, p.down_bias)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, p.up)?;
    tape.add_row(o, p.up_bias)
}

/// Query/key/value weights of one attention site.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

impl<T: Scalar> AttentionParams<T> {
    /// `Wq = Wk = γ·I + noise`, `Wv = I + noise`.
    pub fn near_identity<R: Rng + ?Sized>(e: usize, gamma: f64, std: f64, rng: &mut R) -> Self {
        AttentionParams {
            wq: near_identity(e, gamma, std, rng),
            wk: near_identity(e, gamma, std, rng),
            wv: near_identity(e, 1.0, std, rng),
        }
    }

    pub fn random<R: Rng + ?Sized>(e: usize, std: f64, rng: &mut R) -> Self {
        AttentionParams {
            wq: Matrix::random_normal(e, e, std, rng),
            wk: Matrix::random_normal(e, e, std, rng),
            wv: Matrix::random_normal(e, e, std, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> AttentionVars {
        AttentionVars {
            wq: tape.leaf(self.wq.clone()),
            wk: tape.leaf(self.wk.clone()),
            wv: tape.leaf(self.wv.clone()),
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        vec![&self.wq, &self.wk, &self.wv]
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.wq, &mut self.wk, &mut self.wv]
    }
}

impl AttentionVars {
    pub fn from_slice(v: &[Var]) -> Self {
        AttentionVars {
            wq: v[0],
            wk: v[1],
            wv: v[2],
        }
    }
}

/// Self-attention across the retrieved texts of one aspect.
pub fn self_align<T: Scalar>(tape: &mut Tape<T>, x_t: Var, a: &AttentionVars) -> Result<Var, TensorError> {
    attention(tape, x_t, x_t, x_t, a.wq, a.wk, a.wv)
}

#[derive(Debug, Clone, Copy)]
pub struct CrossVars {
    pub s_c_e: Var,
    pub s_c_r: Var,
    pub s_c: Var,
}

/// Subgraph embeddings attend to entity and relation embeddings; the two are summed.
pub fn cross_align<T: Scalar>(
    tape: &mut Tape<T>,
    s_t: Var,
    e_t: Var,
    r_t: Var,
    to_entities: &AttentionVars,
    to_relations: &AttentionVars,
) -> Result<CrossVars, TensorError> {
    let s_c_e = attention(tape, s_t, e_t, e_t, to_entities.wq, to_entities.wk, to_entities.wv)?;
    let s_c_r = attention(tape, s_t, r_t, r_t, to_relations.wq, to_relations.wk, to_relations.wv)?;
    let s_c = tape.add(s_c_e, s_c_r)?;
    Ok(CrossVars { s_c_e, s_c_r, s_c })
}

/// Evaluated outputs of the alignment stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyTokens<T> {
    pub e_c: Matrix<T>,
    pub r_c: Matrix<T>,
    pub s_c: Matrix<T>,
    pub s_c_e: Matrix<T>,
    pub s_c_r: Matrix<T>,
}

/// All alignment parameters: one shared projector and four attention sites.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentParams<T> {
    pub projector: Projector<T>,
    pub entity_self: AttentionParams<T>,
    pub relation_self: AttentionParams<T>,
    pub cross_entity: AttentionParams<T>,
    pub cross_relation: AttentionParams<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct AlignmentVars {
    pub projector: ProjectorVars,
    pub entity_self: AttentionVars,
    pub relation_self: AttentionVars,
    pub cross_entity: AttentionVars,
    pub cross_relation: AttentionVars,
}

/// Tape handles of the alignment outputs.
#[derive(Debug, Clone, Copy)]
pub struct AlignedVars {
    pub e_t: Var,
    pub r_t: Var,
    pub s_t: Var,
    pub e_c: Var,
    pub r_c: Var,
    pub cross: CrossVars,
}

impl<T: Scalar> AlignmentParams<T> {
    pub const MATRICES: usize = 16;

    pub fn new<R: Rng + ?Sized>(e: usize, d: usize, gamma: f64, std: f64, rng: &mut R) -> Self {
        AlignmentParams {
            projector: Projector::random(e, d, rng),
            entity_self: AttentionParams::near_identity(e, gamma, std, rng),
            relation_self: AttentionParams::near_identity(e, gamma, std, rng),
            cross_entity: AttentionParams::near_identity(e, gamma, std, rng),
            cross_relation: AttentionParams::near_identity(e, gamma, std, rng),
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        let mut v = self.projector.matrices();
        for a in [&self.entity_self, &self.relation_self, &self.cross_entity, &self.cross_relation] {
            v.extend(a.matrices());
        }
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = self.projector.matrices_mut();
        v.extend(self.entity_self.matrices_mut());
        v.extend(self.relation_self.matrices_mut());
        v.extend(self.cross_entity.matrices_mut());
        v.extend(self.cross_relation.matrices_mut());
        v
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> AlignmentVars {
        let vars: Vec<Var> = self.matrices().into_iter().map(|m| tape.leaf(m.clone())).collect();
        AlignmentVars::from_slice(&vars)
    }

    /// Forward pass without keeping the tape.
    pub fn forward(
        &self,
        entities: &TokenTensor<T>,
        relations: &TokenTensor<T>,
        subgraphs: &TokenTensor<T>,
    ) -> Result<ConsistencyTokens<T>, TensorError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let out = align(&mut tape, &p, entities, relations, subgraphs)?;
        Ok(ConsistencyTokens {
            e_c: tape.value(out.e_c).clone(),
            r_c: tape.value(out.r_c).clone(),
            s_c: tape.value(out.cross.s_c).clone(),
            s_c_e: tape.value(out.cross.s_c_e).clone(),
            s_c_r: tape.value(out.cross.s_c_r).clone(),
        })
    }
}

impl AlignmentVars {
    pub fn from_slice(v: &[Var]) -> Self {
        AlignmentVars {
            projector: ProjectorVars::from_slice(&v[0..4]),
            entity_self: AttentionVars::from_slice(&v[4..7]),
            relation_self: AttentionVars::from_slice(&v[7..10]),
            cross_entity: AttentionVars::from_slice(&v[10..13]),
            cross_relation: AttentionVars::from_slice(&v[13..16]),
        }
    }
}

/// Embedding tensors enter as constants; every parameter comes from `p`.
pub fn align<T: Scalar>(
    tape: &mut Tape<T>,
    p: &AlignmentVars,
    entities: &TokenTensor<T>,
    relations: &TokenTensor<T>,
    subgraphs: &TokenTensor<T>,
) -> Result<AlignedVars, TensorError> {
    let xe = tape.leaf(entities.data.clone());
    let xr = tape.leaf(relations.data.clone());
    let xs = tape.leaf(subgraphs.data.clone());
    let e_t = pool_project(tape, xe, entities.len, &p.projector)?;
    let r_t = pool_project(tape, xr, relations.len, &p.projector)?;
    let s_t = pool_project(tape, xs, subgraphs.len, &p.projector)?;
    let e_c = self_align(tape, e_t, &p.entity_self)?;
    let r_c = self_align(tape, r_t, &p.relation_self)?;
    let cross = cross_align(tape, s_t, e_t, r_t, &p.cross_entity, &p.cross_relation)?;
    Ok(AlignedVars {
        e_t,
        r_t,
        s_t,
        e_c,
        r_c,
        cross,
    })
}
