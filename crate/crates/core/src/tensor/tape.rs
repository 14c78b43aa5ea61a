use super::{shape_err, Matrix, TensorError};
use crate::num::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    MeanCols(Var),
    MeanRowBlocks(Var, usize),
    SumAll(Var),
    MeanAll(Var),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    ScaleRows(Var, Var),
    L2NormalizeRows(Var),
    BceLogits {
        logits: Var,
        targets: Vec<T>,
        weights: Vec<T>,
    },
    CrossEntropyRows(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Records matrix operations for reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; all zeros if `v` did not influence the output.
    pub fn get(&self, v: Var) -> Matrix<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn touched(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    // keep gates strictly inside (0,1) even where the float saturates
    s.max(T::epsilon()).min(T::one() - T::epsilon())
}

/// Numerically stable logistic function, clamped to the open unit interval.
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    sigmoid(x)
}

fn softmax_row<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, m: Matrix<T>) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).add(self.value(b)).map_err(|_| TensorError::Shape {
            op: "add",
            left: self.shape(a),
            right: self.shape(b),
        })?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).sub(self.value(b)).map_err(|_| TensorError::Shape {
            op: "sub",
            left: self.shape(a),
            right: self.shape(b),
        })?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Adds a 1×c bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (ar, ac) = self.shape(a);
        let bs = self.shape(bias);
        if bs != (1, ac) {
            return shape_err("add_row", (ar, ac), bs);
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..ar {
            for (x, &y) in out.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y).map_err(|_| TensorError::Shape {
            op: "mul",
            left: self.shape(a),
            right: self.shape(b),
        })?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_row(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// r×c → 1×c column means (zeros when r = 0).
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let (r, c) = m.shape();
        let mut out = Matrix::zeros(1, c);
        if r > 0 {
            let inv = T::one() / T::lit(r as f64);
            for i in 0..r {
                for (o, &x) in out.row_mut(0).iter_mut().zip(m.row(i)) {
                    *o += x * inv;
                }
            }
        }
        self.push(out, Op::MeanRows(a))
    }

    /// r×c → r×1 row means (zeros when c = 0).
    pub fn mean_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let (r, c) = m.shape();
        let mut out = Matrix::zeros(r, 1);
        if c > 0 {
            let inv = T::one() / T::lit(c as f64);
            for i in 0..r {
                out.set(i, 0, m.row(i).iter().copied().sum::<T>() * inv);
            }
        }
        self.push(out, Op::MeanCols(a))
    }

    /// (n·block)×c → n×c, averaging each consecutive block of rows.
    pub fn mean_row_blocks(&mut self, a: Var, block: usize) -> Result<Var, TensorError> {
        let m = self.value(a);
        let (r, c) = m.shape();
        if block == 0 || r % block != 0 {
            return Err(TensorError::Invalid(format!(
                "mean_row_blocks: {r} rows not divisible into blocks of {block}"
            )));
        }
        let n = r / block;
        let inv = T::one() / T::lit(block as f64);
        let mut out = Matrix::zeros(n, c);
        for i in 0..r {
            let src = m.row(i).to_vec();
            for (o, x) in out.row_mut(i / block).iter_mut().zip(src) {
                *o += x * inv;
            }
        }
        Ok(self.push(out, Op::MeanRowBlocks(a, block)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = m.data().len();
        let s = if n == 0 { T::zero() } else { m.sum() / T::lit(n as f64) };
        self.push(Matrix::filled(1, 1, s), Op::MeanAll(a))
    }

    /// Stacks the operands vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let mats: Vec<&Matrix<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Matrix::concat_rows(&mats)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Row i of `x` multiplied by `g[i]`; `g` is r×1.
    pub fn scale_rows(&mut self, g: Var, x: Var) -> Result<Var, TensorError> {
        let gs = self.shape(g);
        let xs = self.shape(x);
        if gs != (xs.0, 1) {
            return shape_err("scale_rows", gs, xs);
        }
        let mut out = self.value(x).clone();
        for r in 0..xs.0 {
            let s = self.value(g).get(r, 0);
            for v in out.row_mut(r) {
                *v *= s;
            }
        }
        Ok(self.push(out, Op::ScaleRows(g, x)))
    }

    /// Divides each row by its Euclidean norm; zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n > T::zero() {
                for x in row.iter_mut() {
                    *x /= n;
                }
            }
        }
        self.push(out, Op::L2NormalizeRows(a))
    }

    /// Weighted mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    /// Entries are taken in row-major order; zero weights mask entries out.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T], weights: &[T]) -> Result<Var, TensorError> {
        let z = self.value(logits);
        let n = z.data().len();
        if targets.len() != n || weights.len() != n {
            return shape_err("bce_with_logits", z.shape(), (targets.len(), weights.len()));
        }
        let total: T = weights.iter().copied().sum();
        let mut loss = T::zero();
        if total > T::zero() {
            for ((&x, &y), &w) in z.data().iter().zip(targets).zip(weights) {
                let l = x.max(T::zero()) - x * y + (T::one() + (-x.abs()).exp()).ln();
                loss += w * l;
            }
            loss /= total;
        }
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// Mean over rows of `-log softmax(row)[target]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let z = self.value(logits);
        let (r, c) = z.shape();
        if targets.len() != r || targets.iter().any(|&t| t >= c) {
            return shape_err("cross_entropy_rows", (r, c), (targets.len(), 1));
        }
        let mut loss = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = z.row(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
            loss += lse - row[t];
        }
        if r > 0 {
            loss /= T::lit(r as f64);
        }
        Ok(self.push(Matrix::filled(1, 1, loss), Op::CrossEntropyRows(logits, targets.to_vec())))
    }

    /// Reverse pass from a 1×1 output. Every call starts from zeroed gradients.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>, TensorError> {
        if self.shape(out) != (1, 1) {
            return shape_err("backward", self.shape(out), (1, 1));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Matrix::filled(1, 1, T::one()));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) -> Result<(), TensorError> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Matrix<T>| {
            grads[v.0] = Some(match grads[v.0].take() {
                Some(prev) => prev.add(&d).expect("gradient shapes agree"),
                None => d,
            });
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.matmul(&val(*b).transpose())?;
                let db = val(*a).transpose().matmul(g)?;
                acc(*a, da);
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-T::one()));
            }
            Op::AddRow(a, bias) => {
                let mut db = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &x) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(*a, g.clone());
                acc(*bias, db);
            }
            Op::Mul(a, b) => {
                let da = g.zip_map(val(*b), |x, y| x * y)?;
                let db = g.zip_map(val(*a), |x, y| x * y)?;
                acc(*a, da);
                acc(*b, db);
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Relu(a) => {
                let d = g.zip_map(val(*a), |x, y| if y > T::zero() { x } else { T::zero() })?;
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, |x, s| x * s * (T::one() - s))?;
                acc(*a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: T = g.row(r).iter().zip(y.row(r)).map(|(&x, &s)| x * s).sum();
                    for c in 0..y.cols() {
                        d.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                acc(*a, d);
            }
            Op::MeanRows(a) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                if r > 0 {
                    let inv = T::one() / T::lit(r as f64);
                    for i in 0..r {
                        for (o, &x) in d.row_mut(i).iter_mut().zip(g.row(0)) {
                            *o = x * inv;
                        }
                    }
                }
                acc(*a, d);
            }
            Op::MeanCols(a) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                if c > 0 {
                    let inv = T::one() / T::lit(c as f64);
                    for i in 0..r {
                        let v = g.get(i, 0) * inv;
                        d.row_mut(i).iter_mut().for_each(|o| *o = v);
                    }
                }
                acc(*a, d);
            }
            Op::MeanRowBlocks(a, block) => {
                let (r, c) = val(*a).shape();
                let inv = T::one() / T::lit(*block as f64);
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    for (o, &x) in d.row_mut(i).iter_mut().zip(g.row(i / block)) {
                        *o = x * inv;
                    }
                }
                acc(*a, d);
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::MeanAll(a) => {
                let (r, c) = val(*a).shape();
                let n = (r * c).max(1);
                acc(*a, Matrix::filled(r, c, g.get(0, 0) / T::lit(n as f64)));
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    let d = Matrix::new(r, c, g.data()[start * c..(start + r) * c].to_vec())?;
                    start += r;
                    acc(p, d);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::ScaleRows(gv, x) => {
                let xm = val(*x);
                let gm = val(*gv);
                let mut dg = Matrix::zeros(xm.rows(), 1);
                let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                for r in 0..xm.rows() {
                    let s = gm.get(r, 0);
                    let mut dot = T::zero();
                    for c in 0..xm.cols() {
                        dot += g.get(r, c) * xm.get(r, c);
                        dx.set(r, c, g.get(r, c) * s);
                    }
                    dg.set(r, 0, dot);
                }
                acc(*gv, dg);
                acc(*x, dx);
            }
            Op::L2NormalizeRows(a) => {
                let xm = val(*a);
                let y = &node.value;
                let mut d = Matrix::zeros(xm.rows(), xm.cols());
                for r in 0..xm.rows() {
                    let n = xm.row(r).iter().map(|&x| x * x).sum::<T>().sqrt();
                    if n == T::zero() {
                        continue;
                    }
                    let dot: T = y.row(r).iter().zip(g.row(r)).map(|(&a, &b)| a * b).sum();
                    for c in 0..xm.cols() {
                        d.set(r, c, (g.get(r, c) - y.get(r, c) * dot) / n);
                    }
                }
                acc(*a, d);
            }
            Op::BceLogits {
                logits,
                targets,
                weights,
            } => {
                let z = val(*logits);
                let total: T = weights.iter().copied().sum();
                let mut d = Matrix::zeros(z.rows(), z.cols());
                if total > T::zero() {
                    let up = g.get(0, 0) / total;
                    for (k, o) in d.data_mut().iter_mut().enumerate() {
                        let x = z.data()[k];
                        let s = T::one() / (T::one() + (-x).exp());
                        *o = up * weights[k] * (s - targets[k]);
                    }
                }
                acc(*logits, d);
            }
            Op::CrossEntropyRows(logits, targets) => {
                let z = val(*logits);
                let (r, _) = z.shape();
                let mut d = z.clone();
                for (i, &t) in targets.iter().enumerate() {
                    softmax_row(d.row_mut(i));
                    let row = d.row_mut(i);
                    row[t] -= T::one();
                }
                let up = g.get(0, 0) / T::lit(r.max(1) as f64);
                acc(*logits, d.scale(up));
            }
        }
        Ok(())
    }
}

/// Attention weights `softmax_rows((Q Wq)(K Wk)ᵀ / √e)` for n queries over m keys.
pub fn attention_with_weights<T: Scalar>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    wq: Var,
    wk: Var,
    wv: Var,
) -> Result<(Var, Var), TensorError> {
    let e = tape.shape(q).1;
    if e == 0 {
        return Err(TensorError::Invalid("attention: embedding dimension is 0".into()));
    }
    let (ks, vs) = (tape.shape(k), tape.shape(v));
    if ks.1 != e {
        return shape_err("attention(q, k)", tape.shape(q), ks);
    }
    if vs.0 != ks.0 {
        return shape_err("attention(k, v)", ks, vs);
    }
    for w in [wq, wk] {
        if tape.shape(w) != (e, e) {
            return shape_err("attention(weight)", tape.shape(w), (e, e));
        }
    }
    if tape.shape(wv).0 != vs.1 {
        return shape_err("attention(v, wv)", vs, tape.shape(wv));
    }
    let qp = tape.matmul(q, wq)?;
    let kp = tape.matmul(k, wk)?;
    let vp = tape.matmul(v, wv)?;
    let kt = tape.transpose(kp);
    let logits = tape.matmul(qp, kt)?;
    let scaled = tape.scale(logits, T::one() / T::lit(e as f64).sqrt());
    let weights = tape.softmax_rows(scaled);
    let out = tape.matmul(weights, vp)?;
    Ok((out, weights))
}

/// Single-head scaled dot-product attention; output is n×e.
pub fn attention<T: Scalar>(
    tape: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    wq: Var,
    wk: Var,
    wv: Var,
) -> Result<Var, TensorError> {
    attention_with_weights(tape, q, k, v, wq, wk, wv).map(|(o, _)| o)
}
