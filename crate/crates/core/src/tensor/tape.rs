use std::collections::HashMap;
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::{gemm, gemm_into, Tensor};
use crate::error::{Error, Result};

/// Shared row index used by gather and segment operations.
pub type Index = Arc<[usize]>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Variable,
    Param,
    GatherSum(Vec<(Var, Option<Index>)>, Option<Var>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Swish(Var),
    Square(Var),
    Sqrt(Var),
    Acos(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    RowSlice(Var, usize),
    Gather(Var, Index),
    SegmentSum(Var, Index),
    SegmentMean(Var, Index, Arc<[f64]>),
    SumRows(Var),
    MeanRows(Var),
    SumCols(Var),
    Softmax(Var),
    SoftmaxCrossEntropy(Var, Arc<[usize]>, Tensor),
    Dropout(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    /// Whether any parameter or variable feeds this node.
    grad: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Variable | Op::Param => vec![],
            Op::GatherSum(parts, bias) => parts.iter().map(|p| p.0).chain(*bias).collect(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
            Op::Scale(a, _)
            | Op::Swish(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Acos(a)
            | Op::Clamp(a, _, _)
            | Op::RowSlice(a, _)
            | Op::Gather(a, _)
            | Op::SegmentSum(a, _)
            | Op::SegmentMean(a, _, _)
            | Op::SumRows(a)
            | Op::MeanRows(a)
            | Op::SumCols(a)
            | Op::Softmax(a)
            | Op::SoftmaxCrossEntropy(a, _, _)
            | Op::Dropout(a, _) => vec![*a],
        }
    }
}

/// Records one forward pass so that [`Tape::backward`] can replay it in
/// reverse. A tape is consumed by `backward`; build a fresh one per step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    by_var: Vec<Option<Tensor>>,
    by_param: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.by_var.get(var.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    match t.shape() {
        [r, c] => (*r, *c),
        [n] => (1, *n),
        s => panic!("expected a rank-2 tensor, got shape {s:?}"),
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape(format!(
            "cannot broadcast {}x{} with {}x{}",
            a.0, a.1, b.0, b.1
        ))),
    }
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (da, db) = (dims2(a), dims2(b));
    let (r, c) = broadcast_shape(da, db)?;
    if da == db {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::matrix(r, c, data));
    }
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if da.0 == 1 { 0 } else { i };
        let ib = if db.0 == 1 { 0 } else { i };
        for j in 0..c {
            let ja = if da.1 == 1 { 0 } else { j };
            let jb = if db.1 == 1 { 0 } else { j };
            data.push(f(a.data()[ia * da.1 + ja], b.data()[ib * db.1 + jb]));
        }
    }
    Ok(Tensor::matrix(r, c, data))
}

/// Sums a full-size gradient down to a broadcast operand's shape.
fn reduce_to(grad: &Tensor, shape: (usize, usize)) -> Tensor {
    let (r, c) = dims2(grad);
    if (r, c) == shape {
        return grad.clone();
    }
    let mut out = Tensor::zeros(vec![shape.0, shape.1]);
    for i in 0..r {
        let oi = if shape.0 == 1 { 0 } else { i };
        for j in 0..c {
            let oj = if shape.1 == 1 { 0 } else { j };
            out.data_mut()[oi * shape.1 + oj] += grad.data()[i * c + j];
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = match op {
            Op::Variable | Op::Param => true,
            Op::Constant => false,
            _ => op.inputs().iter().any(|v| self.nodes[v.0].grad),
        };
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims2(self.value(v))
    }

    /// Records an input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Records an input whose gradient can be read back with
    /// [`Gradients::wrt`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Variable)
    }

    /// `bias + sum_p gather(part_p)` in one step: row `r` of the result adds
    /// row `index_p[r]` of each indexed part, or row `r` of unindexed ones.
    pub fn gather_sum(&mut self, parts: &[(Var, Option<Index>)], bias: Option<Var>, rows: usize) -> Result<Var> {
        let cols = match (parts.first(), bias) {
            (Some(p), _) => self.shape(p.0).1,
            (None, Some(b)) => self.shape(b).1,
            (None, None) => return Err(Error::Shape("gather_sum of nothing".into())),
        };
        let mut out = vec![0.0; rows * cols];
        for (v, index) in parts {
            let t = self.value(*v);
            let (r, c) = dims2(t);
            if c != cols {
                return Err(Error::Shape(format!(
                    "gather_sum part has {c} columns, expected {cols}"
                )));
            }
            match index {
                Some(idx) => {
                    if idx.len() != rows {
                        return Err(Error::Shape(format!(
                            "gather_sum index has {} rows, expected {rows}",
                            idx.len()
                        )));
                    }
                    if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
                        return Err(Error::Shape(format!("gather index {bad} >= {r}")));
                    }
                    for (o, &i) in out.chunks_exact_mut(cols.max(1)).zip(idx.iter()) {
                        o.iter_mut().zip(t.row(i)).for_each(|(a, b)| *a += b);
                    }
                }
                None => {
                    if r != rows {
                        return Err(Error::Shape(format!("gather_sum part has {r} rows, expected {rows}")));
                    }
                    out.iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
                }
            }
        }
        if let Some(b) = bias {
            let t = self.value(b);
            if dims2(t) != (1, cols) {
                return Err(Error::Shape(format!("gather_sum bias shape {:?}", t.shape())));
            }
            for o in out.chunks_exact_mut(cols.max(1)) {
                o.iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
            }
        }
        Ok(self.push(Tensor::matrix(rows, cols, out), Op::GatherSum(parts.to_vec(), bias)))
    }

    /// Binds a stored parameter; repeated calls return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.bound.insert(id, v);
        v
    }

    /// Binds every parameter of the store so each one receives a gradient.
    pub fn bind_all(&mut self, store: &ParamStore) {
        for id in store.ids() {
            self.param(store, id);
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Shape(format!("matmul {m}x{k} @ {k2}x{n}")));
        }
        let out = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = broadcast_zip(self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = broadcast_zip(self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = broadcast_zip(self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = broadcast_zip(self.value(a), self.value(b), |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a).map(|x| x * factor);
        self.push(t, Op::Scale(a, factor))
    }

    pub fn swish(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * sigmoid(x));
        self.push(t, Op::Swish(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        self.push(t, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::sqrt);
        self.push(t, Op::Sqrt(a))
    }

    /// Arc-cosine; callers clamp into `(-1, 1)` first so the derivative
    /// stays finite.
    pub fn acos(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::acos);
        self.push(t, Op::Acos(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(t, Op::Clamp(a, lo, hi))
    }

    /// Concatenates along columns. All parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::Shape(format!("concat: {r} rows vs {rows}")));
            }
            cols += c;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                if t.cols() > 0 {
                    data.extend_from_slice(t.row(r));
                }
            }
        }
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::Concat(parts.to_vec())))
    }

    /// Rows `start..start + len` of `a`.
    pub fn row_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(Error::Shape(format!("row slice {start}+{len} of {r} rows")));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(Tensor::matrix(len, c, data), Op::RowSlice(a, start)))
    }

    /// Output row `r` is input row `index[r]`.
    pub fn gather(&mut self, a: Var, index: &Index) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape(format!("gather index {bad} >= {rows}")));
        }
        let t = self.value(a).select_rows(index);
        Ok(self.push(t, Op::Gather(a, index.clone())))
    }

    /// Sums input row `r` into output row `segment[r]`; `segments` output rows.
    pub fn segment_sum(&mut self, a: Var, segment: &Index, segments: usize) -> Result<Var> {
        let t = self.segment_accumulate(a, segment, segments)?;
        Ok(self.push(t, Op::SegmentSum(a, segment.clone())))
    }

    /// Mean over each segment; empty segments yield zero rows.
    pub fn segment_mean(&mut self, a: Var, segment: &Index, segments: usize) -> Result<Var> {
        let mut t = self.segment_accumulate(a, segment, segments)?;
        let mut counts = vec![0usize; segments];
        for &s in segment.iter() {
            counts[s] += 1;
        }
        let inv: Arc<[f64]> = counts
            .iter()
            .map(|&n| if n == 0 { 0.0 } else { 1.0 / n as f64 })
            .collect();
        if t.cols() > 0 {
            for (s, &w) in inv.iter().enumerate() {
                t.row_mut(s).iter_mut().for_each(|v| *v *= w);
            }
        }
        Ok(self.push(t, Op::SegmentMean(a, segment.clone(), inv)))
    }

    fn segment_accumulate(&self, a: Var, segment: &Index, segments: usize) -> Result<Tensor> {
        let (r, c) = self.shape(a);
        if segment.len() != r {
            return Err(Error::Shape(format!(
                "segment index has {} entries for {r} rows",
                segment.len()
            )));
        }
        if let Some(&bad) = segment.iter().find(|&&s| s >= segments) {
            return Err(Error::Shape(format!("segment {bad} >= {segments}")));
        }
        // Compensated (Neumaier) sums, so the result barely depends on the
        // order of rows within a segment.
        let mut out = Tensor::zeros(vec![segments, c]);
        if c > 0 {
            let src = self.value(a);
            let mut comp = vec![0.0; segments * c];
            for (row, &s) in segment.iter().enumerate() {
                let cs = &mut comp[s * c..(s + 1) * c];
                for ((o, e), &v) in out.row_mut(s).iter_mut().zip(cs).zip(src.row(row)) {
                    let t = *o + v;
                    *e += if o.abs() >= v.abs() { (*o - t) + v } else { (v - t) + *o };
                    *o = t;
                }
            }
            out.data_mut().iter_mut().zip(&comp).for_each(|(o, e)| *o += e);
        }
        Ok(out)
    }

    /// Column sums, `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.column_totals(a);
        self.push(t, Op::SumRows(a))
    }

    /// Column means, `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, _) = self.shape(a);
        let mut t = self.column_totals(a);
        if r > 0 {
            t.data_mut().iter_mut().for_each(|v| *v /= r as f64);
        }
        self.push(t, Op::MeanRows(a))
    }

    fn column_totals(&self, a: Var) -> Tensor {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(src.row(i)) {
                *o += v;
            }
        }
        Tensor::matrix(1, c, out)
    }

    /// Row sums, `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let data = (0..r)
            .map(|i| if c == 0 { 0.0 } else { src.row(i).iter().sum() })
            .collect();
        self.push(Tensor::matrix(r, 1, data), Op::SumCols(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = row_softmax(self.value(a));
        self.push(t, Op::Softmax(a))
    }

    /// Mean softmax cross-entropy of `logits` (`batch x classes`) against
    /// class labels. Returns a `1 x 1` loss.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.shape(logits);
        if labels.len() != b {
            return Err(Error::Shape(format!("{} labels for {b} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Shape(format!("label {bad} >= {c} classes")));
        }
        let probs = row_softmax(self.value(logits));
        let x = self.value(logits);
        let mut loss = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = x.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[l];
        }
        loss /= b.max(1) as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy(logits, labels.into(), probs),
        ))
    }

    /// Multiplies by a precomputed (already rescaled) keep mask.
    pub fn dropout_mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::Shape("dropout mask size".into()));
        }
        let src = self.value(a);
        let data = src.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(Tensor::matrix(r, c, data), Op::Dropout(a, mask)))
    }

    /// Reverse pass from a scalar `loss`. Every bound parameter receives a
    /// gradient (zero when it does not influence the loss).
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape().to_vec(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            if matches!(self.nodes[idx].op, Op::Variable | Op::Param) {
                grads[idx] = Some(g);
            }
        }

        let mut by_param = HashMap::new();
        for (&id, &var) in &self.bound {
            let g = grads[var.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.value(var).shape().to_vec()));
            by_param.insert(id, g);
        }
        Ok(Gradients {
            by_var: grads,
            by_param,
        })
    }

    /// Adds the gradient produced by `f` to `v`, unless `v` needs none.
    fn give(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce() -> Tensor) {
        if self.nodes[v.0].grad {
            accumulate(&mut grads[v.0], f());
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Constant | Op::Variable | Op::Param => {}
            Op::GatherSum(parts, bias) => {
                for (v, index) in parts {
                    self.give(grads, *v, || match index {
                        Some(idx) => {
                            let (r, c) = self.shape(*v);
                            let mut d = Tensor::zeros(vec![r, c]);
                            if c > 0 {
                                for (row, &src) in idx.iter().enumerate() {
                                    d.row_mut(src).iter_mut().zip(g.row(row)).for_each(|(o, x)| *o += x);
                                }
                            }
                            d
                        }
                        None => g.clone(),
                    });
                }
                if let Some(b) = bias {
                    self.give(grads, *b, || reduce_to(g, self.shape(*b)));
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let (_, nn) = self.shape(*b);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // dA = G @ B^T, dB = A^T @ G
                self.give(grads, *a, || {
                    let mut da = vec![0.0; m * k];
                    gemm_into(1.0, g.data(), (nn as isize, 1), bv, (1, nn as isize), &mut da, m, nn, k);
                    Tensor::matrix(m, k, da)
                });
                self.give(grads, *b, || {
                    let mut db = vec![0.0; k * nn];
                    gemm_into(1.0, av, (1, k as isize), g.data(), (nn as isize, 1), &mut db, k, m, nn);
                    Tensor::matrix(k, nn, db)
                });
            }
            Op::Add(a, b) => {
                self.give(grads, *a, || reduce_to(g, self.shape(*a)));
                self.give(grads, *b, || reduce_to(g, self.shape(*b)));
            }
            Op::Sub(a, b) => {
                self.give(grads, *a, || reduce_to(g, self.shape(*a)));
                self.give(grads, *b, || reduce_to(&g.map(|v| -v), self.shape(*b)));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.give(grads, *a, || {
                    reduce_to(
                        &broadcast_zip(g, bv, |x, y| x * y).expect("shapes checked in forward"),
                        self.shape(*a),
                    )
                });
                self.give(grads, *b, || {
                    reduce_to(
                        &broadcast_zip(g, av, |x, y| x * y).expect("shapes checked in forward"),
                        self.shape(*b),
                    )
                });
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                let ga = broadcast_zip(g, bv, |x, y| x / y).expect("shapes checked in forward");
                // d(a/b)/db = -(a/b)/b
                let q = broadcast_zip(out, bv, |o, y| -o / y).expect("shapes checked in forward");
                let gb = broadcast_zip(g, &q, |x, y| x * y).expect("same shape");
                self.give(grads, *a, || reduce_to(&ga, self.shape(*a)));
                self.give(grads, *b, || reduce_to(&gb, self.shape(*b)));
            }
            Op::Scale(a, f) => self.give(grads, *a, || g.map(|v| v * f)),
            Op::Swish(a) => {
                let x = self.value(*a);
                let d = zip_same(g, x, |gv, xv| {
                    let s = sigmoid(xv);
                    gv * (s + xv * s * (1.0 - s))
                });
                self.give(grads, *a, || d);
            }
            Op::Square(a) => {
                let d = zip_same(g, self.value(*a), |gv, xv| 2.0 * gv * xv);
                self.give(grads, *a, || d);
            }
            Op::Sqrt(a) => {
                let d = zip_same(g, out, |gv, ov| gv / (2.0 * ov));
                self.give(grads, *a, || d);
            }
            Op::Acos(a) => {
                let d = zip_same(g, self.value(*a), |gv, xv| -gv / (1.0 - xv * xv).sqrt());
                self.give(grads, *a, || d);
            }
            Op::Clamp(a, lo, hi) => {
                let d = zip_same(
                    g,
                    self.value(*a),
                    |gv, xv| {
                        if xv >= *lo && xv <= *hi {
                            gv
                        } else {
                            0.0
                        }
                    },
                );
                self.give(grads, *a, || d);
            }
            Op::Concat(parts) => {
                let (rows, cols) = dims2(g);
                let mut offset = 0;
                for p in parts {
                    let (_, c) = self.shape(*p);
                    let mut d = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        d.extend_from_slice(&g.data()[r * cols + offset..r * cols + offset + c]);
                    }
                    offset += c;
                    self.give(grads, *p, || Tensor::matrix(rows, c, d));
                }
            }
            Op::RowSlice(a, start) => {
                let (r, c) = self.shape(*a);
                let mut d = Tensor::zeros(vec![r, c]);
                d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.give(grads, *a, || d);
            }
            Op::Gather(a, index) => {
                let (r, c) = self.shape(*a);
                let mut d = Tensor::zeros(vec![r, c]);
                if c > 0 {
                    for (row, &src) in index.iter().enumerate() {
                        for (o, v) in d.row_mut(src).iter_mut().zip(g.row(row)) {
                            *o += v;
                        }
                    }
                }
                self.give(grads, *a, || d);
            }
            Op::SegmentSum(a, segment) => {
                self.give(grads, *a, || g.select_rows(segment));
            }
            Op::SegmentMean(a, segment, inv) => {
                let mut d = g.select_rows(segment);
                if d.cols() > 0 {
                    for (row, &s) in segment.iter().enumerate() {
                        d.row_mut(row).iter_mut().for_each(|v| *v *= inv[s]);
                    }
                }
                self.give(grads, *a, || d);
            }
            Op::SumRows(a) | Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let w = if matches!(node.op, Op::MeanRows(_)) && r > 0 {
                    1.0 / r as f64
                } else {
                    1.0
                };
                let mut d = Vec::with_capacity(r * c);
                for _ in 0..r {
                    d.extend(g.data().iter().map(|v| v * w));
                }
                self.give(grads, *a, || Tensor::matrix(r, c, d));
            }
            Op::SumCols(a) => {
                let (r, c) = self.shape(*a);
                let mut d = Vec::with_capacity(r * c);
                for i in 0..r {
                    d.extend(std::iter::repeat_n(g.data()[i], c));
                }
                self.give(grads, *a, || Tensor::matrix(r, c, d));
            }
            Op::Softmax(a) => {
                let (r, c) = dims2(out);
                let mut d = Vec::with_capacity(r * c);
                for i in 0..r {
                    let (p, gi) = (out.row(i), g.row(i));
                    let dot: f64 = p.iter().zip(gi).map(|(x, y)| x * y).sum();
                    d.extend(p.iter().zip(gi).map(|(pv, gv)| pv * (gv - dot)));
                }
                self.give(grads, *a, || Tensor::matrix(r, c, d));
            }
            Op::SoftmaxCrossEntropy(a, labels, probs) => {
                let (b, c) = dims2(probs);
                let scale = g.item() / b.max(1) as f64;
                let mut d = probs.data().to_vec();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * c + l] -= 1.0;
                }
                d.iter_mut().for_each(|v| *v *= scale);
                self.give(grads, *a, || Tensor::matrix(b, c, d));
            }
            Op::Dropout(a, mask) => {
                let (r, c) = dims2(g);
                let d = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.give(grads, *a, || Tensor::matrix(r, c, d));
            }
        }
    }
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same-shape zip")
}

fn row_softmax(x: &Tensor) -> Tensor {
    let (r, c) = dims2(x);
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = x.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        data.extend(exps.iter().map(|e| e / z));
    }
    Tensor::matrix(r, c, data)
}
