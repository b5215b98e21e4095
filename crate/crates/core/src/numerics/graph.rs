//! Tape-based reverse-mode differentiation over 2D `f64` matrices.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse and accumulates adjoints. Only nodes that
//! depend on a trainable leaf carry gradients.

use std::rc::Rc;

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::rope::RotationTable;

/// MLP token embeddings have mean-square ~1e-6 at init; eps must sit far below.
pub const RMS_EPS: f64 = 1e-12;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    SwiGlu(Var, Var),
    RmsNorm(Var, Vec<f64>),
    Softmax(Var),
    Gather(Var, Vec<usize>),
    Rope(Var, Rc<RotationTable>),
    Dropout(Var, Array2<f64>),
    Slice(Var, usize, usize),
    Assemble(Vec<(Var, usize, usize)>),
    CrossEntropy(Var, Vec<usize>, Array2<f64>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    grad: bool,
}

/// The tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    nonfinite: Option<(usize, &'static str)>,
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: {a:?} vs {b:?}"))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    fn push(&mut self, value: Array2<f64>, op: Op, grad: bool, name: &'static str) -> Var {
        if self.nonfinite.is_none() && !value.iter().all(|x| x.is_finite()) {
            self.nonfinite = Some((self.nodes.len(), name));
        }
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input: never receives a gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// A trainable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Fails if any node produced so far holds a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.nonfinite {
            None => Ok(()),
            Some((i, name)) => Err(Error::NonFinite(format!(
                "node {i} ({name}) of {}",
                self.nodes.len()
            ))),
        }
    }

    fn g2(&self, a: Var, b: Var) -> bool {
        self.nodes[a.0].grad || self.nodes[b.0].grad
    }

    /// `a[m,k] · b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(shape_err("matmul", va.shape(), vb.shape()));
        }
        let out = va.dot(vb);
        let g = self.g2(a, b);
        Ok(self.push(out, Op::MatMul(a, b), g, "matmul"))
    }

    /// `a[m,k] · b[n,k]ᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.ncols() {
            return Err(shape_err("matmul_nt", va.shape(), vb.shape()));
        }
        let out = va.dot(&vb.t());
        let g = self.g2(a, b);
        Ok(self.push(out, Op::MatMulNT(a, b), g, "matmul_nt"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err("add", va.shape(), vb.shape()));
        }
        let out = va + vb;
        let g = self.g2(a, b);
        Ok(self.push(out, Op::Add(a, b), g, "add"))
    }

    /// Broadcast a `1×n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(shape_err("add_row", va.shape(), vr.shape()));
        }
        let out = va + vr;
        let g = self.g2(a, row);
        Ok(self.push(out, Op::AddRow(a, row), g, "add_row"))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err("mul", va.shape(), vb.shape()));
        }
        let out = va * vb;
        let g = self.g2(a, b);
        Ok(self.push(out, Op::Mul(a, b), g, "mul"))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(shape_err("mul_row", va.shape(), vr.shape()));
        }
        let out = va * vr;
        let g = self.g2(a, row);
        Ok(self.push(out, Op::MulRow(a, row), g, "mul_row"))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a) * s;
        let g = self.nodes[a.0].grad;
        self.push(out, Op::Scale(a, s), g, "scale")
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * sigmoid(x));
        let g = self.nodes[a.0].grad;
        self.push(out, Op::Silu(a), g, "silu")
    }

    /// `silu(a) ⊙ b`
    pub fn swiglu(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err("swiglu", va.shape(), vb.shape()));
        }
        let mut out = va.mapv(|x| x * sigmoid(x));
        out *= vb;
        let g = self.g2(a, b);
        Ok(self.push(out, Op::SwiGlu(a, b), g, "swiglu"))
    }

    /// Row-wise `x / sqrt(mean(x²) + eps)`, without gain.
    pub fn rmsnorm(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let n = vx.ncols() as f64;
        let inv: Vec<f64> = vx
            .rows()
            .into_iter()
            .map(|r| 1.0 / (r.iter().map(|v| v * v).sum::<f64>() / n + RMS_EPS).sqrt())
            .collect();
        let mut out = vx.clone();
        for (mut row, s) in out.rows_mut().into_iter().zip(&inv) {
            row *= *s;
        }
        let g = self.nodes[x.0].grad;
        self.push(out, Op::RmsNorm(x, inv), g, "rmsnorm")
    }

    /// Row softmax. With `causal`, column `j > row` is masked out (requires a
    /// square input).
    pub fn softmax(&mut self, x: Var, causal: bool) -> Result<Var> {
        let vx = self.value(x);
        if causal && vx.nrows() != vx.ncols() {
            return Err(Error::Shape(format!(
                "causal softmax needs a square input, got {:?}",
                vx.shape()
            )));
        }
        let mut out = Array2::zeros(vx.dim());
        for (i, (row, mut o)) in vx.rows().into_iter().zip(out.rows_mut()).enumerate() {
            let end = if causal { i + 1 } else { row.len() };
            let row = row.to_vec();
            softmax_into(&row[..end], o.as_slice_mut().expect("fresh array"));
        }
        let g = self.nodes[x.0].grad;
        Ok(self.push(out, Op::Softmax(x), g, "softmax"))
    }

    /// Select rows of `table`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        if let Some(bad) = idx.iter().find(|i| **i >= vt.nrows()) {
            return Err(Error::Index(format!(
                "row {bad} of a {}-row table",
                vt.nrows()
            )));
        }
        let out = vt.select(Axis(0), idx);
        let g = self.nodes[table.0].grad;
        Ok(self.push(out, Op::Gather(table, idx.to_vec()), g, "gather"))
    }

    /// Rotate every head chunk of every row by the rotary table.
    pub fn rope(&mut self, x: Var, table: Rc<RotationTable>) -> Result<Var> {
        let out = table.rotate_heads(self.value(x), false)?;
        let g = self.nodes[x.0].grad;
        Ok(self.push(out, Op::Rope(x, table), g, "rope"))
    }

    /// Multiply by a fixed mask (already scaled for inverted dropout).
    pub fn dropout(&mut self, x: Var, mask: Array2<f64>) -> Result<Var> {
        let vx = self.value(x);
        if vx.dim() != mask.dim() {
            return Err(shape_err("dropout", vx.shape(), mask.shape()));
        }
        let out = vx * &mask;
        let g = self.nodes[x.0].grad;
        Ok(self.push(out, Op::Dropout(x, mask), g, "dropout"))
    }

    /// Rectangular block `x[r0..r0+rows, c0..c0+cols]`.
    pub fn slice(&mut self, x: Var, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Var> {
        let vx = self.value(x);
        if r0 + rows > vx.nrows() || c0 + cols > vx.ncols() {
            return Err(Error::Shape(format!(
                "slice [{r0}+{rows}, {c0}+{cols}] of {:?}",
                vx.shape()
            )));
        }
        let out = vx.slice(s![r0..r0 + rows, c0..c0 + cols]).to_owned();
        let g = self.nodes[x.0].grad;
        Ok(self.push(out, Op::Slice(x, r0, c0), g, "slice"))
    }

    /// Place non-overlapping blocks at `(row, col)` offsets in a zero matrix.
    pub fn assemble(
        &mut self,
        rows: usize,
        cols: usize,
        parts: &[(Var, usize, usize)],
    ) -> Result<Var> {
        let mut out = Array2::zeros((rows, cols));
        let mut g = false;
        for &(v, r0, c0) in parts {
            let vp = &self.nodes[v.0].value;
            if r0 + vp.nrows() > rows || c0 + vp.ncols() > cols {
                return Err(Error::Shape(format!(
                    "assemble block {:?} at ({r0},{c0}) into ({rows},{cols})",
                    vp.shape()
                )));
            }
            out.slice_mut(s![r0..r0 + vp.nrows(), c0..c0 + vp.ncols()])
                .assign(vp);
            g |= self.nodes[v.0].grad;
        }
        Ok(self.push(out, Op::Assemble(parts.to_vec()), g, "assemble"))
    }

    /// Mean over rows of `-log softmax(logits)[target]`, as a `1×1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        if vl.nrows() != targets.len() {
            return Err(Error::Shape(format!(
                "cross_entropy: {} logit rows, {} targets",
                vl.nrows(),
                targets.len()
            )));
        }
        if let Some(bad) = targets.iter().find(|t| **t >= vl.ncols()) {
            return Err(Error::Index(format!(
                "target {bad} with {} classes",
                vl.ncols()
            )));
        }
        let mut probs = Array2::zeros(vl.dim());
        let mut total = 0.0;
        for ((row, mut p), &t) in vl.rows().into_iter().zip(probs.rows_mut()).zip(targets) {
            let lse = log_sum_exp(row.iter().copied());
            total += lse - row[t];
            for (pi, li) in p.iter_mut().zip(row.iter()) {
                *pi = (li - lse).exp();
            }
        }
        let loss = total / targets.len().max(1) as f64;
        let g = self.nodes[logits.0].grad;
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy(logits, targets.to_vec(), probs),
            g,
            "cross_entropy",
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(x).sum());
        let g = self.nodes[x.0].grad;
        self.push(out, Op::Sum(x), g, "sum")
    }

    /// Reverse pass from a `1×1` output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).dim() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got {:?}",
                self.value(out).shape()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones((1, 1)));
        for i in (0..=out.0).rev() {
            if !self.nodes[i].grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].grad;
        let mut acc = |v: Var, d: Array2<f64>| {
            if !self.nodes[v.0].grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if wants(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Op::MatMulNT(a, b) => {
                if wants(*a) {
                    acc(*a, g.dot(val(*b)));
                }
                if wants(*b) {
                    acc(*b, g.t().dot(val(*a)));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, r) => {
                acc(*a, g.clone());
                if wants(*r) {
                    acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g * val(*b));
                }
                if wants(*b) {
                    acc(*b, g * val(*a));
                }
            }
            Op::MulRow(a, r) => {
                if wants(*a) {
                    acc(*a, g * val(*r));
                }
                if wants(*r) {
                    acc(*r, (g * val(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(a, s) => acc(*a, g * *s),
            Op::Silu(a) => {
                let d = ndarray::Zip::from(g).and(val(*a)).map_collect(|&gi, &x| {
                    let sg = sigmoid(x);
                    gi * sg * (1.0 + x * (1.0 - sg))
                });
                acc(*a, d);
            }
            Op::SwiGlu(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if wants(*a) {
                    let d = ndarray::Zip::from(g)
                        .and(va)
                        .and(vb)
                        .map_collect(|&gi, &x, &y| {
                            let sg = sigmoid(x);
                            gi * y * sg * (1.0 + x * (1.0 - sg))
                        });
                    acc(*a, d);
                }
                if wants(*b) {
                    acc(
                        *b,
                        ndarray::Zip::from(g)
                            .and(va)
                            .map_collect(|&gi, &x| gi * x * sigmoid(x)),
                    );
                }
            }
            Op::RmsNorm(x, inv) => {
                let y = &node.value;
                let n = y.ncols() as f64;
                let mut d = Array2::zeros(y.dim());
                for (((gr, yr), mut dr), r) in g
                    .rows()
                    .into_iter()
                    .zip(y.rows())
                    .zip(d.rows_mut())
                    .zip(inv)
                {
                    let m = gr.dot(&yr) / n;
                    for ((dj, gj), yj) in dr.iter_mut().zip(gr.iter()).zip(yr.iter()) {
                        *dj = r * (gj - yj * m);
                    }
                }
                acc(*x, d);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let mut d = Array2::zeros(y.dim());
                for ((gr, yr), mut dr) in g.rows().into_iter().zip(y.rows()).zip(d.rows_mut()) {
                    let m = gr.dot(&yr);
                    for ((dj, gj), yj) in dr.iter_mut().zip(gr.iter()).zip(yr.iter()) {
                        *dj = yj * (gj - m);
                    }
                }
                acc(*x, d);
            }
            Op::Gather(t, idx) => {
                let mut d = Array2::zeros(val(*t).dim());
                for (row, &k) in g.rows().into_iter().zip(idx) {
                    let mut target = d.row_mut(k);
                    target += &row;
                }
                acc(*t, d);
            }
            Op::Rope(x, table) => {
                acc(
                    *x,
                    table
                        .rotate_heads(g, true)
                        .expect("shape checked in forward"),
                );
            }
            Op::Dropout(x, mask) => acc(*x, g * mask),
            Op::Slice(x, r0, c0) => {
                if wants(*x) {
                    // Accumulate straight into the block; avoid a full-size temporary.
                    let block = s![*r0..*r0 + g.nrows(), *c0..*c0 + g.ncols()];
                    let slot = grads[x.0].get_or_insert_with(|| Array2::zeros(val(*x).dim()));
                    let mut dst = slot.slice_mut(block);
                    dst += g;
                }
            }
            Op::Assemble(parts) => {
                for &(v, r0, c0) in parts {
                    if wants(v) {
                        let (r, c) = val(v).dim();
                        acc(v, g.slice(s![r0..r0 + r, c0..c0 + c]).to_owned());
                    }
                }
            }
            Op::CrossEntropy(l, targets, probs) => {
                let scale = g[[0, 0]] / targets.len().max(1) as f64;
                let mut d = probs.clone();
                for (mut row, &t) in d.rows_mut().into_iter().zip(targets) {
                    row[t] -= 1.0;
                }
                d *= scale;
                acc(*l, d);
            }
            Op::Sum(x) => acc(*x, Array2::from_elem(val(*x).dim(), g[[0, 0]])),
        }
    }
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// `None` when `v` does not depend on any trainable input.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of `xs` into the first `xs.len()` entries of `out`; the rest are
/// zeroed.
pub fn softmax_into(xs: &[f64], out: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, x) in out.iter_mut().zip(xs) {
        *o = (x - m).exp();
        z += *o;
    }
    for o in out[..xs.len()].iter_mut() {
        *o /= z;
    }
    for o in out[xs.len()..].iter_mut() {
        *o = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Array2::from_elem((2, 8), 0.3));
        let y = g.softmax(x, false).unwrap();
        for v in g.value(y) {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut g = Graph::new();
        let x = g.constant(array![[1.0, 5.0, 2.0], [0.0, 0.0, 9.0], [1.0, 2.0, 3.0]]);
        let y = g.softmax(x, true).unwrap();
        let v = g.value(y);
        assert_eq!(v[[0, 0]], 1.0);
        assert_eq!(v[[0, 1]], 0.0);
        assert!((v[[1, 0]] - 0.5).abs() < 1e-15);
        assert_eq!(v[[1, 2]], 0.0);
        assert!((v.row(2).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let mut g = Graph::new();
        let x = g.constant(Array2::zeros((3, 64)));
        let l = g.cross_entropy(x, &[0, 5, 63]).unwrap();
        assert!((g.value(l)[[0, 0]] - 64f64.ln()).abs() < 1e-12);
        assert!(g.cross_entropy(x, &[64, 0, 0]).is_err());
        assert!(g.cross_entropy(x, &[0]).is_err());
    }

    #[test]
    fn cross_entropy_one_hot_limit() {
        let mut g = Graph::new();
        let mut logits = Array2::zeros((2, 4));
        logits[[0, 1]] = 100.0;
        logits[[1, 3]] = 100.0;
        let x = g.constant(logits);
        let l = g.cross_entropy(x, &[1, 3]).unwrap();
        assert!(g.value(l)[[0, 0]] < 1e-40);
    }

    #[test]
    fn rmsnorm_unit_rms() {
        let mut g = Graph::new();
        let x = g.constant(array![[3.0, 4.0]]);
        let y = g.rmsnorm(x);
        let v = g.value(y);
        let rms = (v.iter().map(|a| a * a).sum::<f64>() / 2.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-6);
    }

    #[test]
    fn swiglu_definition() {
        let mut g = Graph::new();
        let a = g.constant(array![[1.0, -2.0]]);
        let b = g.constant(array![[3.0, 0.5]]);
        let y = g.swiglu(a, b).unwrap();
        let expect = |x: f64, z: f64| x / (1.0 + (-x).exp()) * z;
        assert!((g.value(y)[[0, 0]] - expect(1.0, 3.0)).abs() < 1e-15);
        assert!((g.value(y)[[0, 1]] - expect(-2.0, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::new();
        let x = g.param(array![[1.0, 2.0, 3.0]]);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &array![[2.0, 4.0, 6.0]]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let w = g.constant(array![[1.0, 2.0]]);
        let x = g.param(array![[3.0, 4.0]]);
        let y = g.mul(w, x).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(w).is_none());
        assert_eq!(grads.get(x).unwrap(), &array![[1.0, 2.0]]);
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.constant(Array2::zeros((2, 3)));
        let b = g.constant(Array2::zeros((2, 3)));
        assert!(g.matmul(a, b).is_err());
        assert!(g.add_row(a, b).is_err());
        assert!(g.softmax(a, true).is_err());
        assert!(g.gather(a, &[2]).is_err());
        assert!(g.slice(a, 1, 0, 2, 1).is_err());
    }

    #[test]
    fn nonfinite_is_reported() {
        let mut g = Graph::new();
        let a = g.constant(array![[1.0, f64::NAN]]);
        let _ = g.scale(a, 2.0);
        assert!(matches!(g.check_finite(), Err(Error::NonFinite(_))));
    }
}
