//! Reverse-mode differentiation over a per-pass tape.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are
//! appended in evaluation order, so walking the tape backwards visits
//! each node after all of its consumers. The tape is dropped after the
//! gradients have been read out.

use crate::error::{Error, Result};
use crate::tensor::{kernels, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    /// weights `[B×G]`, values `[(B·G)×H]`
    GroupWeightedSum(Var, Var),
    /// rows of `a` scaled by column `col` of `w`
    ScaleRows(Var, Var, usize),
    CrossEntropy(Var, Vec<usize>),
    /// student log-probabilities against a constant teacher
    KlDiv(Var, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> Result<Var> {
        value.check_finite(what)?;
        self.nodes.push(Node {
            value,
            op,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` root with respect to `v`; zeros when
    /// `v` did not contribute.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone())
                .expect("gradient matches value shape"),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape().len() != 2 {
            return Err(Error::Dimension(format!("matmul rhs must be 2-D, got {:?}", bv.shape())));
        }
        let (m, k) = dims2(av);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = Tensor::new(vec![m, n], kernels::matmul(av.data(), bv.data(), m, k, n))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.len() != av.cols() {
            return Err(Error::Dimension(format!(
                "bias of length {} for {:?}",
                bv.len(),
                av.shape()
            )));
        }
        let mut out = av.clone();
        let n = bv.len();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % n];
        }
        self.push(out, Op::AddBias(a, b), "add_bias")
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Dimension(format!("add {:?} + {:?}", av.shape(), bv.shape())));
        }
        let mut out = av.clone();
        for (o, v) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += v;
        }
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o = o.max(0.0);
        }
        self.push(out, Op::Relu(a), "relu")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o *= c;
        }
        self.push(out, Op::Scale(a, c), "scale")
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        av.check_finite("softmax input")?;
        let mut out = Tensor::zeros(av.shape());
        for r in 0..av.rows() {
            kernels::softmax_row(av.row(r), out.row_mut(r));
        }
        self.push(out, Op::Softmax(a), "softmax")
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mut out = Tensor::zeros(av.shape());
        for r in 0..av.rows() {
            kernels::log_softmax_row(av.row(r), out.row_mut(r));
        }
        self.push(out, Op::LogSoftmax(a), "log_softmax")
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push(out, Op::Reshape(a), "reshape")
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        let (r, c) = dims2(av);
        if rows.is_empty() {
            return Err(Error::Dimension("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in &rows {
            if i >= r {
                return Err(Error::Index(format!("row {i} of {r}")));
            }
            data.extend_from_slice(av.row(i));
        }
        let out = Tensor::new(vec![rows.len(), c], data)?;
        self.push(out, Op::GatherRows(a, rows), "gather_rows")
    }

    /// `out[b] = Σ_g weights[b,g] · values[b·G + g]`
    pub fn group_weighted_sum(&mut self, weights: Var, values: Var) -> Result<Var> {
        let (wv, vv) = (self.value(weights), self.value(values));
        let (b, g) = dims2(wv);
        let (rows, h) = dims2(vv);
        if rows != b * g {
            return Err(Error::Dimension(format!(
                "group sum of {:?} over {:?}",
                wv.shape(),
                vv.shape()
            )));
        }
        let mut out = Tensor::zeros(&[b, h]);
        for bi in 0..b {
            for gi in 0..g {
                let w = wv.get2(bi, gi);
                let src = vv.row(bi * g + gi);
                for (o, v) in out.row_mut(bi).iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        self.push(out, Op::GroupWeightedSum(weights, values), "group_weighted_sum")
    }

    pub fn scale_rows(&mut self, a: Var, w: Var, col: usize) -> Result<Var> {
        let (av, wv) = (self.value(a), self.value(w));
        if av.rows() != wv.rows() || col >= wv.cols() {
            return Err(Error::Dimension(format!(
                "scale_rows {:?} by column {col} of {:?}",
                av.shape(),
                wv.shape()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            let s = wv.get2(r, col);
            for o in out.row_mut(r) {
                *o *= s;
            }
        }
        self.push(out, Op::ScaleRows(a, w, col), "scale_rows")
    }

    /// Mean negative log-likelihood of `labels` under row log-probabilities.
    pub fn cross_entropy(&mut self, log_probs: Var, labels: &[usize]) -> Result<Var> {
        let lp = self.value(log_probs);
        let (b, k) = dims2(lp);
        if labels.len() != b {
            return Err(Error::Dimension(format!("{} labels for {b} rows", labels.len())));
        }
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Index(format!("label {y} with {k} classes")));
            }
            loss -= lp.get2(r, y);
        }
        let out = Tensor::scalar(loss / b as f64);
        self.push(out, Op::CrossEntropy(log_probs, labels.to_vec()), "cross_entropy")
    }

    /// Mean over rows of `Σ_k t_k (ln t_k − s_k)`.
    pub fn kl_divergence(&mut self, teacher: &Tensor, student_log_probs: Var) -> Result<Var> {
        let ls = self.value(student_log_probs);
        if !teacher.same_shape(ls) {
            return Err(Error::Dimension(format!(
                "teacher {:?} vs student {:?}",
                teacher.shape(),
                ls.shape()
            )));
        }
        check_distribution_rows(teacher, 1e-6)?;
        let b = ls.rows();
        let mut loss = 0.0;
        for (t, s) in teacher.data().iter().zip(ls.data()) {
            if *t > 0.0 {
                loss += t * (t.ln() - s);
            }
        }
        let out = Tensor::scalar(loss / b as f64);
        self.push(out, Op::KlDiv(student_log_probs, teacher.clone()), "kl_divergence")
    }

    fn accumulate(&mut self, v: Var, delta: &[f64]) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            None => node.grad = Some(delta.to_vec()),
        }
    }

    /// Back-propagates from a scalar root. Clears gradients from any earlier call.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::Dimension("backward root must be a scalar".into()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[root.0].grad = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(dy) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backprop_node(i, &op, &dy);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(dy);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, op: &Op, dy: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (m, k) = dims2(av);
                let n = bv.shape()[1];
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                for r in 0..m {
                    let dyr = &dy[r * n..(r + 1) * n];
                    for p in 0..k {
                        let brow = &bv.data()[p * n..(p + 1) * n];
                        da[r * k + p] = dyr.iter().zip(brow).map(|(x, y)| x * y).sum();
                        let a_rp = av.data()[r * k + p];
                        if a_rp != 0.0 {
                            for (d, g) in db[p * n..(p + 1) * n].iter_mut().zip(dyr) {
                                *d += a_rp * g;
                            }
                        }
                    }
                }
                self.accumulate(a, &da);
                self.accumulate(b, &db);
            }
            Op::AddBias(a, b) => {
                let n = self.value(b).len();
                let mut db = vec![0.0; n];
                for (j, g) in dy.iter().enumerate() {
                    db[j % n] += g;
                }
                self.accumulate(a, dy);
                self.accumulate(b, &db);
            }
            Op::Add(a, b) => {
                self.accumulate(a, dy);
                self.accumulate(b, dy);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = self
                    .value(a)
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(a, &da);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = dy.iter().map(|g| g * c).collect();
                self.accumulate(a, &da);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[i].value;
                let k = y.cols();
                let mut da = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &dy[r * k..(r + 1) * k];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for j in 0..k {
                        da[r * k + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(a, &da);
            }
            Op::LogSoftmax(a) => {
                let y = &self.nodes[i].value;
                let k = y.cols();
                let mut da = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &dy[r * k..(r + 1) * k];
                    let total: f64 = gr.iter().sum();
                    for j in 0..k {
                        da[r * k + j] = gr[j] - yr[j].exp() * total;
                    }
                }
                self.accumulate(a, &da);
            }
            Op::Reshape(a) => self.accumulate(a, dy),
            Op::GatherRows(a, ref rows) => {
                let av = self.value(a);
                let c = av.cols();
                let mut da = vec![0.0; av.len()];
                for (o, &src) in rows.iter().enumerate() {
                    for j in 0..c {
                        da[src * c + j] += dy[o * c + j];
                    }
                }
                self.accumulate(a, &da);
            }
            Op::GroupWeightedSum(w, v) => {
                let (wv, vv) = (self.value(w), self.value(v));
                let (b, g) = dims2(wv);
                let h = vv.cols();
                let mut dw = vec![0.0; b * g];
                let mut dv = vec![0.0; vv.len()];
                for bi in 0..b {
                    let gr = &dy[bi * h..(bi + 1) * h];
                    for gi in 0..g {
                        let row = bi * g + gi;
                        let vr = vv.row(row);
                        dw[bi * g + gi] = vr.iter().zip(gr).map(|(x, y)| x * y).sum();
                        let wt = wv.get2(bi, gi);
                        for (d, y) in dv[row * h..(row + 1) * h].iter_mut().zip(gr) {
                            *d = wt * y;
                        }
                    }
                }
                self.accumulate(w, &dw);
                self.accumulate(v, &dv);
            }
            Op::ScaleRows(a, w, col) => {
                let (av, wv) = (self.value(a), self.value(w));
                let k = av.cols();
                let mut da = vec![0.0; av.len()];
                let mut dw = vec![0.0; wv.len()];
                for r in 0..av.rows() {
                    let s = wv.get2(r, col);
                    let mut acc = 0.0;
                    for j in 0..k {
                        da[r * k + j] = dy[r * k + j] * s;
                        acc += dy[r * k + j] * av.get2(r, j);
                    }
                    dw[r * wv.cols() + col] = acc;
                }
                self.accumulate(a, &da);
                self.accumulate(w, &dw);
            }
            Op::CrossEntropy(lp, ref labels) => {
                let lv = self.value(lp);
                let k = lv.cols();
                let b = labels.len() as f64;
                let mut d = vec![0.0; lv.len()];
                for (r, &y) in labels.iter().enumerate() {
                    d[r * k + y] = -dy[0] / b;
                }
                self.accumulate(lp, &d);
            }
            Op::KlDiv(ls, ref teacher) => {
                let b = teacher.rows() as f64;
                let d: Vec<f64> = teacher.data().iter().map(|t| -dy[0] * t / b).collect();
                self.accumulate(ls, &d);
            }
        }
    }
}

/// Each row must be non-negative and sum to one within `tol`.
pub fn check_distribution_rows(t: &Tensor, tol: f64) -> Result<()> {
    for r in 0..t.rows() {
        let row = t.row(r);
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Distribution(format!("row {r} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::Distribution(format!("row {r} sums to {s}")));
        }
    }
    Ok(())
}

/// Tape-free conveniences for one-off evaluations.
pub mod ops {
    use super::*;

    pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (x, w, b) = (g.leaf(x.clone())?, g.leaf(w.clone())?, g.leaf(b.clone())?);
        let y = g.affine(x, w, b)?;
        Ok(g.value(y).clone())
    }

    pub fn softmax(logits: &Tensor) -> Result<Tensor> {
        logits.check_finite("softmax input")?;
        let mut g = Graph::new();
        let x = g.leaf(logits.clone())?;
        let y = g.softmax(x)?;
        Ok(g.value(y).clone())
    }

    pub fn log_softmax(logits: &Tensor) -> Result<Tensor> {
        logits.check_finite("log_softmax input")?;
        let mut g = Graph::new();
        let x = g.leaf(logits.clone())?;
        let y = g.log_softmax(x)?;
        Ok(g.value(y).clone())
    }

    pub fn cross_entropy(log_probs: &Tensor, labels: &[usize]) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(log_probs.clone())?;
        let y = g.cross_entropy(x, labels)?;
        Ok(g.value(y).data()[0])
    }

    pub fn kl_divergence(teacher: &Tensor, student_log_probs: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(student_log_probs.clone())?;
        let y = g.kl_divergence(teacher, x)?;
        Ok(g.value(y).data()[0])
    }
}
