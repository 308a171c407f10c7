//! Tape of recorded primitive applications and its reverse sweep.
//!
//! Every primitive appends one node whose parents have strictly smaller
//! indices, so walking the tape backwards is a valid topological order and
//! each application is visited exactly once.

use super::kernels::{
    gelu, gelu_grad, layer_norm_forward, log_sum_exp, matmul_raw, matmul_t_raw, matmul_tn_raw,
    sigmoid, softmax_in_place,
};
use super::{NumericError, Real, Result, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    ScaleRows(Var, Var),
    MulConst(Var, Vec<F>),
    Affine(Var, F),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Sqrt(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        normed: Vec<F>,
        inv_std: Vec<F>,
    },
    GatherRows(Var, Vec<usize>),
    GatherCols(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    Concat(Vec<Var>),
    SelectRows(Vec<bool>, Var, Var),
    Reshape(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    WeightedSum(Var, Vec<F>),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<F>,
    },
}

impl<F> Op<F> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulRow(..) => "mul_row",
            Op::ScaleRows(..) => "scale_rows",
            Op::MulConst(..) => "mul_const",
            Op::Affine(..) => "affine",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Gelu(..) => "gelu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Ln(..) => "ln",
            Op::Sqrt(..) => "sqrt",
            Op::Softmax(..) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::GatherRows(..) => "gather_rows",
            Op::GatherCols(..) => "gather_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Concat(..) => "concat",
            Op::SelectRows(..) => "select_rows",
            Op::Reshape(..) => "reshape",
            Op::Sum(..) => "sum",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::WeightedSum(..) => "weighted_sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Single-step computation record.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    work: u64,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar result with respect to every recorded value.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, var: Var) -> Option<&Tensor<F>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            work: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Deterministic count of arithmetic work recorded so far (multiply-adds
    /// for products, element visits otherwise).
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Records an input value (parameter or constant).
    pub fn leaf(&mut self, value: Tensor<F>) -> Result<Var> {
        if !value.all_finite() {
            return Err(NumericError::NonFinite { op: "leaf" });
        }
        Ok(self.push_unchecked(value, Op::Leaf))
    }

    fn push_unchecked(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Result<Var> {
        if !value.all_finite() {
            return Err(NumericError::NonFinite { op: op.name() });
        }
        self.work += value.len() as u64;
        Ok(self.push_unchecked(value, op))
    }

    fn v(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(F, F) -> F,
    ) -> Result<Tensor<F>> {
        let (ta, tb) = (self.v(a), self.v(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn zip_row(
        &mut self,
        a: Var,
        row: Var,
        name: &'static str,
        f: impl Fn(F, F) -> F,
    ) -> Result<Tensor<F>> {
        let (ta, tr) = (self.v(a), self.v(row));
        let width = *ta.shape().last().unwrap_or(&1);
        if tr.shape() != [width] {
            return Err(shape_err(name, ta.shape(), tr.shape()));
        }
        let r = tr.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, r[i % width]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn map(&mut self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let t = self.v(a);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("map preserves element count")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b))
    }

    /// Adds a vector along the trailing dimension of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.zip_row(a, row, "add_row", |x, y| x + y)?;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b))
    }

    /// Multiplies by a vector along the trailing dimension of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.zip_row(a, row, "mul_row", |x, y| x * y)?;
        self.push(out, Op::MulRow(a, row))
    }

    /// Scales row `i` of matrix `a` by `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: Var) -> Result<Var> {
        let (ta, tf) = (self.v(a), self.v(factors));
        let (m, n) = ta.dims2()?;
        if ta.rank() != 2 || tf.shape() != [m] {
            return Err(shape_err("scale_rows", ta.shape(), tf.shape()));
        }
        let f = tf.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * f[i / n.max(1)])
            .collect();
        let out = Tensor::new(vec![m, n], data)?;
        self.push(out, Op::ScaleRows(a, factors))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, constant: &Tensor<F>) -> Result<Var> {
        let ta = self.v(a);
        if ta.shape() != constant.shape() {
            return Err(shape_err("mul_const", ta.shape(), constant.shape()));
        }
        let data = ta.data().iter().zip(constant.data()).map(|(&x, &c)| x * c).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::MulConst(a, constant.data().to_vec()))
    }

    /// `scale · a + shift` with scalar constants.
    pub fn affine(&mut self, a: Var, scale: F, shift: F) -> Result<Var> {
        let out = self.map(a, |x| scale * x + shift);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, scale: F) -> Result<Var> {
        self.affine(a, scale, F::zero())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.v(a), self.v(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::new(vec![m, n], matmul_raw(ta.data(), tb.data(), m, k, n))?;
        self.work += (m * k * n) as u64;
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.v(a), self.v(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[1] {
            return Err(shape_err("matmul_t", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[0]);
        let out = Tensor::new(vec![m, n], matmul_t_raw(ta.data(), tb.data(), m, k, n))?;
        self.work += (m * k * n) as u64;
        self.push(out, Op::MatMulT(a, b))
    }

    /// Gaussian-error linear unit, `x·Φ(x)`.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.tanh());
        self.push(out, Op::Tanh(a))
    }

    /// Logistic function.
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.ln());
        self.push(out, Op::Ln(a))
    }

    /// Square root; its derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.sqrt());
        self.push(out, Op::Sqrt(a))
    }

    /// Softmax along the trailing dimension. When `keep` is given, columns
    /// whose flag is false get exactly zero probability.
    pub fn softmax_rows(&mut self, a: Var, keep: Option<&[bool]>) -> Result<Var> {
        let ta = self.v(a);
        let (m, n) = ta.dims2()?;
        if n == 0 {
            return Err(NumericError::EmptyAxis { op: "softmax" });
        }
        if let Some(k) = keep {
            if k.len() != n {
                return Err(shape_err("softmax", ta.shape(), &[k.len()]));
            }
        }
        let mut data = ta.data().to_vec();
        for r in 0..m {
            softmax_in_place(&mut data[r * n..(r + 1) * n], keep);
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.work += 3 * (m * n) as u64;
        self.push(out, Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, epsilon: F) -> Result<Var> {
        let (tx, tg, ts) = (self.v(x), self.v(gain), self.v(shift));
        let width = *tx.shape().last().unwrap_or(&1);
        if tg.shape() != [width] || ts.shape() != [width] {
            return Err(shape_err("layer_norm", tx.shape(), tg.shape()));
        }
        if epsilon <= F::zero() {
            return Err(NumericError::InvalidArgument(
                "layer_norm epsilon must be positive".into(),
            ));
        }
        let (out, normed, inv_std) =
            layer_norm_forward(tx.data(), tg.data(), ts.data(), width, epsilon);
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        self.work += 4 * out.len() as u64;
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                shift,
                normed,
                inv_std,
            },
        )
    }

    /// Rows `ids` of a matrix, in order (repeats allowed).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.v(table);
        if t.rank() != 2 {
            return Err(shape_err("gather_rows", t.shape(), &[]));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(NumericError::IndexOutOfRange {
                    op: "gather_rows",
                    index: id,
                    extent: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        self.push(out, Op::GatherRows(table, ids.to_vec()))
    }

    /// Columns `ids` of a matrix, in order (repeats allowed).
    pub fn gather_cols(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.v(table);
        if t.rank() != 2 {
            return Err(shape_err("gather_cols", t.shape(), &[]));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= cols) {
            return Err(NumericError::IndexOutOfRange {
                op: "gather_cols",
                index: bad,
                extent: cols,
            });
        }
        let mut data = Vec::with_capacity(rows * ids.len());
        for r in 0..rows {
            let row = t.row(r);
            data.extend(ids.iter().map(|&id| row[id]));
        }
        let out = Tensor::new(vec![rows, ids.len()], data)?;
        self.push(out, Op::GatherCols(table, ids.to_vec()))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.v(a);
        if t.rank() != 2 || start > end || end > t.shape()[1] {
            return Err(shape_err("slice_cols", t.shape(), &[start, end]));
        }
        let m = t.shape()[0];
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::new(vec![m, end - start], data)?;
        self.push(out, Op::SliceCols(a, start, end))
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or(NumericError::EmptyAxis { op: "concat_cols" })?;
        let m = self.v(*first).shape().first().copied().unwrap_or(0);
        let mut total = 0;
        for &p in parts {
            let t = self.v(p);
            if t.rank() != 2 || t.shape()[0] != m {
                return Err(shape_err("concat_cols", self.v(*first).shape(), t.shape()));
            }
            total += t.shape()[1];
        }
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.v(p).row(r));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Concatenation of scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.v(p);
            if t.rank() > 1 {
                return Err(shape_err("concat", t.shape(), &[]));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::vector(data);
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Row `i` from `on_true` where `mask[i]`, else from `on_false`.
    pub fn select_rows(&mut self, mask: &[bool], on_true: Var, on_false: Var) -> Result<Var> {
        let (ta, tb) = (self.v(on_true), self.v(on_false));
        if ta.shape() != tb.shape() || ta.rank() != 2 || ta.shape()[0] != mask.len() {
            return Err(shape_err("select_rows", ta.shape(), tb.shape()));
        }
        let mut data = Vec::with_capacity(ta.len());
        for (r, &m) in mask.iter().enumerate() {
            data.extend_from_slice(if m { ta.row(r) } else { tb.row(r) });
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, Op::SelectRows(mask.to_vec(), on_true, on_false))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.v(a).clone().with_shape(shape.to_vec())?;
        self.push(out, Op::Reshape(a))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total: F = self.v(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Sum over the leading axis of a matrix.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.v(a);
        let (m, n) = t.dims2()?;
        let mut out = vec![F::zero(); n];
        for r in 0..m {
            for (o, &x) in out.iter_mut().zip(t.row(r)) {
                *o = *o + x;
            }
        }
        self.push(Tensor::vector(out), Op::SumRows(a))
    }

    /// Sum over the trailing axis of a matrix.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.v(a);
        let (m, _) = t.dims2()?;
        let out = (0..m).map(|r| t.row(r).iter().copied().sum()).collect();
        self.push(Tensor::vector(out), Op::SumCols(a))
    }

    /// `Σ wᵢ·aᵢ` with constant weights.
    pub fn weighted_sum(&mut self, a: Var, weights: &[F]) -> Result<Var> {
        let t = self.v(a);
        if t.len() != weights.len() {
            return Err(shape_err("weighted_sum", t.shape(), &[weights.len()]));
        }
        let total: F = t.data().iter().zip(weights).map(|(&x, &w)| x * w).sum();
        self.push(Tensor::scalar(total), Op::WeightedSum(a, weights.to_vec()))
    }

    /// Mean over entries whose mask flag is set; zero when none are.
    pub fn masked_mean(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let count = mask.iter().filter(|&&m| m).count();
        let w = if count == 0 {
            F::zero()
        } else {
            F::one() / F::of(count as f64)
        };
        let weights: Vec<F> = mask.iter().map(|&m| if m { w } else { F::zero() }).collect();
        self.weighted_sum(a, &weights)
    }

    /// Per-row cross-entropy of `logits` against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.v(logits);
        let (m, n) = t.dims2()?;
        if labels.len() != m {
            return Err(shape_err("cross_entropy", t.shape(), &[labels.len()]));
        }
        if n == 0 {
            return Err(NumericError::EmptyAxis { op: "cross_entropy" });
        }
        let mut losses = Vec::with_capacity(m);
        let mut probs = t.data().to_vec();
        for (r, &label) in labels.iter().enumerate() {
            if label >= n {
                return Err(NumericError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: label,
                    extent: n,
                });
            }
            let row = t.row(r);
            losses.push(log_sum_exp(row) - row[label]);
            softmax_in_place(&mut probs[r * n..(r + 1) * n], None);
        }
        self.work += 3 * (m * n) as u64;
        self.push(
            Tensor::vector(losses),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Reverse sweep from a scalar result.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let lt = self.v(loss);
        if lt.len() != 1 {
            return Err(NumericError::NotScalar(lt.shape().to_vec()));
        }
        if !lt.all_finite() {
            return Err(NumericError::NonFinite { op: "loss" });
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.shape().to_vec(), F::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !g.all_finite() {
                return Err(NumericError::NonFiniteGradient {
                    op: node.op.name(),
                });
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        node: &Node<F>,
        g: &Tensor<F>,
        grads: &mut [Option<Tensor<F>>],
    ) -> Result<()> {
        let gd = g.data();
        let y = node.value.data();
        let like = |v: Var, data: Vec<F>| Tensor::new(self.v(v).shape().to_vec(), data);
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, like(*b, gd.iter().map(|&x| -x).collect())?);
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let width = self.v(*row).len();
                let mut gr = vec![F::zero(); width];
                for (i, &x) in gd.iter().enumerate() {
                    gr[i % width] = gr[i % width] + x;
                }
                accumulate(grads, *row, like(*row, gr)?);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.v(*a).data(), self.v(*b).data());
                let ga = gd.iter().zip(vb).map(|(&x, &w)| x * w).collect();
                let gb = gd.iter().zip(va).map(|(&x, &w)| x * w).collect();
                accumulate(grads, *a, like(*a, ga)?);
                accumulate(grads, *b, like(*b, gb)?);
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (self.v(*a).data(), self.v(*row).data());
                let width = vr.len();
                let ga = gd
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| x * vr[i % width])
                    .collect();
                let mut gr = vec![F::zero(); width];
                for (i, (&x, &av)) in gd.iter().zip(va).enumerate() {
                    gr[i % width] = gr[i % width] + x * av;
                }
                accumulate(grads, *a, like(*a, ga)?);
                accumulate(grads, *row, like(*row, gr)?);
            }
            Op::ScaleRows(a, f) => {
                let (va, vf) = (self.v(*a), self.v(*f).data());
                let n = va.shape()[1].max(1);
                let ga = gd.iter().enumerate().map(|(i, &x)| x * vf[i / n]).collect();
                let mut gf = vec![F::zero(); vf.len()];
                for (i, (&x, &av)) in gd.iter().zip(va.data()).enumerate() {
                    gf[i / n] = gf[i / n] + x * av;
                }
                accumulate(grads, *a, like(*a, ga)?);
                accumulate(grads, *f, like(*f, gf)?);
            }
            Op::MulConst(a, c) => {
                let ga = gd.iter().zip(c).map(|(&x, &w)| x * w).collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::Affine(a, s) => {
                accumulate(grads, *a, like(*a, gd.iter().map(|&x| x * *s).collect())?);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.v(*a), self.v(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = dC · Bᵀ ; dB = Aᵀ · dC
                accumulate(grads, *a, like(*a, matmul_t_raw(gd, tb.data(), m, n, k))?);
                accumulate(grads, *b, like(*b, matmul_tn_raw(ta.data(), gd, m, k, n))?);
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (self.v(*a), self.v(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[0]);
                // dA = dC · B ; dB = dCᵀ · A
                accumulate(grads, *a, like(*a, matmul_raw(gd, tb.data(), m, n, k))?);
                accumulate(grads, *b, like(*b, matmul_tn_raw(gd, ta.data(), m, n, k))?);
            }
            Op::Gelu(a) => {
                let va = self.v(*a).data();
                let ga = gd.iter().zip(va).map(|(&x, &u)| x * gelu_grad(u)).collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::Tanh(a) => {
                let ga = gd
                    .iter()
                    .zip(y)
                    .map(|(&x, &t)| x * (F::one() - t * t))
                    .collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::Sigmoid(a) => {
                let ga = gd
                    .iter()
                    .zip(y)
                    .map(|(&x, &s)| x * s * (F::one() - s))
                    .collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::Ln(a) => {
                let va = self.v(*a).data();
                let ga = gd.iter().zip(va).map(|(&x, &u)| x / u).collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::Sqrt(a) => {
                let ga = gd
                    .iter()
                    .zip(y)
                    .map(|(&x, &r)| {
                        if r == F::zero() {
                            F::zero()
                        } else {
                            x * F::of(0.5) / r
                        }
                    })
                    .collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::Softmax(a) => {
                let (m, n) = node.value.dims2()?;
                let mut ga = vec![F::zero(); m * n];
                for r in 0..m {
                    let (yr, gr) = (&y[r * n..(r + 1) * n], &gd[r * n..(r + 1) * n]);
                    let dot: F = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for j in 0..n {
                        ga[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                normed,
                inv_std,
            } => {
                let gv = self.v(*gain).data();
                let width = gv.len();
                let rows = inv_std.len();
                let nf = F::of(width as f64);
                let mut dgain = vec![F::zero(); width];
                let mut dshift = vec![F::zero(); width];
                let mut dx = vec![F::zero(); gd.len()];
                for r in 0..rows {
                    let span = r * width..(r + 1) * width;
                    let (gr, xh) = (&gd[span.clone()], &normed[span.clone()]);
                    let mut sum_d = F::zero();
                    let mut sum_dx = F::zero();
                    for j in 0..width {
                        dgain[j] = dgain[j] + gr[j] * xh[j];
                        dshift[j] = dshift[j] + gr[j];
                        let d = gr[j] * gv[j];
                        sum_d = sum_d + d;
                        sum_dx = sum_dx + d * xh[j];
                    }
                    let scale = inv_std[r] / nf;
                    for j in 0..width {
                        let d = gr[j] * gv[j];
                        dx[r * width + j] = scale * (nf * d - sum_d - xh[j] * sum_dx);
                    }
                }
                accumulate(grads, *x, like(*x, dx)?);
                accumulate(grads, *gain, like(*gain, dgain)?);
                accumulate(grads, *shift, like(*shift, dshift)?);
            }
            Op::GatherRows(table, ids) => {
                let tt = self.v(*table);
                let cols = tt.shape()[1];
                let mut gt = vec![F::zero(); tt.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..cols {
                        gt[id * cols + c] = gt[id * cols + c] + gd[r * cols + c];
                    }
                }
                accumulate(grads, *table, like(*table, gt)?);
            }
            Op::GatherCols(table, ids) => {
                let tt = self.v(*table);
                let (rows, cols) = (tt.shape()[0], tt.shape()[1]);
                let k = ids.len();
                let mut gt = vec![F::zero(); tt.len()];
                for r in 0..rows {
                    for (c, &id) in ids.iter().enumerate() {
                        gt[r * cols + id] = gt[r * cols + id] + gd[r * k + c];
                    }
                }
                accumulate(grads, *table, like(*table, gt)?);
            }
            Op::SliceCols(a, start, end) => {
                let ta = self.v(*a);
                let (m, n) = (ta.shape()[0], ta.shape()[1]);
                let w = end - start;
                let mut ga = vec![F::zero(); m * n];
                for r in 0..m {
                    ga[r * n + start..r * n + end].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::ConcatCols(parts) => {
                let (m, total) = node.value.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.v(p).shape()[1];
                    let mut gp = Vec::with_capacity(m * w);
                    for r in 0..m {
                        gp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(grads, p, like(p, gp)?);
                    offset += w;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.v(p).len();
                    accumulate(grads, p, like(p, gd[offset..offset + w].to_vec())?);
                    offset += w;
                }
            }
            Op::SelectRows(mask, a, b) => {
                let n = node.value.shape()[1];
                let mut ga = vec![F::zero(); gd.len()];
                let mut gb = vec![F::zero(); gd.len()];
                for (r, &m) in mask.iter().enumerate() {
                    let dst = if m { &mut ga } else { &mut gb };
                    dst[r * n..(r + 1) * n].copy_from_slice(&gd[r * n..(r + 1) * n]);
                }
                accumulate(grads, *a, like(*a, ga)?);
                accumulate(grads, *b, like(*b, gb)?);
            }
            Op::Reshape(a) => {
                accumulate(grads, *a, like(*a, gd.to_vec())?);
            }
            Op::Sum(a) => {
                let n = self.v(*a).len();
                accumulate(grads, *a, like(*a, vec![gd[0]; n])?);
            }
            Op::SumRows(a) => {
                let (m, n) = self.v(*a).dims2()?;
                let ga = (0..m * n).map(|i| gd[i % n]).collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::SumCols(a) => {
                let (m, n) = self.v(*a).dims2()?;
                let ga = (0..m * n).map(|i| gd[i / n.max(1)]).collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::WeightedSum(a, w) => {
                let ga = w.iter().map(|&x| x * gd[0]).collect();
                accumulate(grads, *a, like(*a, ga)?);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let (_, n) = self.v(*logits).dims2()?;
                let mut gl = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    gl[r * n + label] = gl[r * n + label] - F::one();
                    for v in &mut gl[r * n..(r + 1) * n] {
                        *v = *v * gd[r];
                    }
                }
                accumulate(grads, *logits, like(*logits, gl)?);
            }
        }
        Ok(())
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Tensor<F>>], var: Var, g: Tensor<F>) {
    match &mut grads[var.0] {
        Some(existing) => {
            for (e, &x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e = *e + x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
