//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every primitive evaluates eagerly and appends one record to the [`Tape`].
//! [`Tape::backward`] walks the records in exact reverse order, so operands
//! are always visited after every result that consumed them. Records whose
//! inputs do not require gradients are skipped.

use std::cell::RefCell;
use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    ScaleRows(usize, usize),
    Scale(usize, f64),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    InterleaveCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    SegmentSum(usize, Vec<usize>),
    SegmentSoftmax(usize, Vec<usize>),
    RowSoftmax(usize),
    SumAll(usize),
    SumCols(usize),
    Exp(usize),
    Log(usize),
    Sin(usize),
    Cos(usize),
    Relu(usize),
    Sigmoid(usize),
    Clamp(usize, f64, f64),
    LayerNorm { input: usize, inv_std: Vec<f64> },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Record of primitive operations for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` when `v` does not
    /// influence the root or does not require gradients.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Like [`Self::get`] but returns zeros of the right shape when absent.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, lhs: [usize; 2], rhs: [usize; 2]) -> Error {
    Error::Shape { op, lhs, rhs }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        self.push_shared(Arc::new(value), op, requires_grad)
    }

    fn push_shared(&self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable input; gradients are tracked.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Trainable input sharing storage with the caller (no copy).
    pub fn leaf_shared(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push_shared(value, Op::Leaf, true)
    }

    /// Input that never needs a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn value_of(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Concatenates along columns; all parts must have the same row count.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_cols of nothing".into()))?;
        let rows = first.shape()[0];
        let mut cols = 0;
        for p in parts {
            if p.shape()[0] != rows {
                return Err(shape_err("concat_cols", first.shape(), p.shape()));
            }
            cols += p.shape()[1];
        }
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let mut off = 0;
            for v in &values {
                let w = v.cols();
                out[r * cols + off..r * cols + off + w].copy_from_slice(v.row_slice(r));
                off += w;
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.requires(&ids);
        Ok(self.push(Tensor::new(rows, cols, out)?, Op::ConcatCols(ids), rg))
    }

    /// Stacks along rows; all parts must have the same column count.
    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_rows of nothing".into()))?;
        let cols = first.shape()[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.shape()[1] != cols {
                return Err(shape_err("concat_rows", first.shape(), p.shape()));
            }
            let v = p.value();
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.requires(&ids);
        Ok(self.push(Tensor::new(rows, cols, data)?, Op::ConcatRows(ids), rg))
    }

    /// Reverse pass from `root`, seeded with ones.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        let [r, c] = nodes[root.id].value.shape();
        grads[root.id] = Some(Tensor::full(r, c, 1.0));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[id].take() else {
                continue;
            };
            backward_op(&nodes, id, &dy, &mut grads)?;
            grads[id] = Some(dy);
        }
        // keep only gradients for nodes that want them
        for (g, node) in grads.iter_mut().zip(nodes.iter()) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| {
        let [r, c] = nodes[id].value.shape();
        Tensor::zeros(r, c)
    });
    f(slot.data_mut());
}

fn backward_op(nodes: &[Node], id: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let y = &nodes[id].value;
    let g = dy.data();
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            // da = dy * b^T
            accumulate(nodes, grads, *a, |da| {
                gemm(m, n, k, g, (n, 1), bv.data(), (1, n), 1.0, da)
            });
            // db = a^T * dy
            accumulate(nodes, grads, *b, |db| {
                gemm(k, m, n, av.data(), (1, k), g, (n, 1), 1.0, db)
            });
        }
        Op::Add(a, b) => {
            for i in [*a, *b] {
                accumulate(nodes, grads, i, |d| d.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
            }
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
            accumulate(nodes, grads, *b, |d| d.iter_mut().zip(g).for_each(|(x, gi)| *x -= gi));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), bi) in d.iter_mut().zip(g).zip(bv.data()) {
                    *x += gi * bi;
                }
            });
            accumulate(nodes, grads, *b, |d| {
                for ((x, gi), ai) in d.iter_mut().zip(g).zip(av.data()) {
                    *x += gi * ai;
                }
            });
        }
        Op::AddRow(a, row) => {
            let cols = y.cols();
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
            accumulate(nodes, grads, *row, |d| {
                for chunk in g.chunks(cols) {
                    d.iter_mut().zip(chunk).for_each(|(x, gi)| *x += gi);
                }
            });
        }
        Op::MulRow(a, row) => {
            let cols = y.cols();
            let (av, rv) = (val(*a), val(*row));
            accumulate(nodes, grads, *a, |d| {
                for (dr, gr) in d.chunks_mut(cols).zip(g.chunks(cols)) {
                    for ((x, gi), ri) in dr.iter_mut().zip(gr).zip(rv.data()) {
                        *x += gi * ri;
                    }
                }
            });
            accumulate(nodes, grads, *row, |d| {
                for (ar, gr) in av.data().chunks(cols).zip(g.chunks(cols)) {
                    for ((x, gi), ai) in d.iter_mut().zip(gr).zip(ar) {
                        *x += gi * ai;
                    }
                }
            });
        }
        Op::ScaleRows(a, w) => {
            let cols = y.cols();
            let (av, wv) = (val(*a), val(*w));
            accumulate(nodes, grads, *a, |d| {
                for ((dr, gr), wi) in d.chunks_mut(cols).zip(g.chunks(cols)).zip(wv.data()) {
                    dr.iter_mut().zip(gr).for_each(|(x, gi)| *x += gi * wi);
                }
            });
            if cols > 0 {
                accumulate(nodes, grads, *w, |d| {
                    for ((x, gr), ar) in d.iter_mut().zip(g.chunks(cols)).zip(av.data().chunks(cols)) {
                        *x += gr.iter().zip(ar).map(|(gi, ai)| gi * ai).sum::<f64>();
                    }
                });
            }
        }
        Op::Scale(a, s) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(x, gi)| *x += gi * s));
        }
        Op::ConcatCols(parts) => {
            let cols = y.cols();
            let mut off = 0;
            for &p in parts {
                let w = val(p).cols();
                if w > 0 {
                    accumulate(nodes, grads, p, |d| {
                        for (r, dr) in d.chunks_mut(w).enumerate() {
                            let src = &g[r * cols + off..r * cols + off + w];
                            dr.iter_mut().zip(src).for_each(|(x, gi)| *x += gi);
                        }
                    });
                }
                off += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for &p in parts {
                let n = val(p).len();
                accumulate(nodes, grads, p, |d| {
                    d.iter_mut().zip(&g[off..off + n]).for_each(|(x, gi)| *x += gi)
                });
                off += n;
            }
        }
        Op::SliceCols(a, start) => {
            let (w, in_cols) = (y.cols(), val(*a).cols());
            if w > 0 {
                accumulate(nodes, grads, *a, |d| {
                    for (dr, gr) in d.chunks_mut(in_cols).zip(g.chunks(w)) {
                        dr[*start..*start + w].iter_mut().zip(gr).for_each(|(x, gi)| *x += gi);
                    }
                });
            }
        }
        Op::InterleaveCols(a, b) => {
            let w = val(*a).cols();
            if w > 0 {
                for (src, off) in [(*a, 0usize), (*b, 1usize)] {
                    accumulate(nodes, grads, src, |d| {
                        for (dr, gr) in d.chunks_mut(w).zip(g.chunks(2 * w)) {
                            for (j, x) in dr.iter_mut().enumerate() {
                                *x += gr[2 * j + off];
                            }
                        }
                    });
                }
            }
        }
        Op::GatherRows(a, idx) => {
            let cols = y.cols();
            if cols > 0 {
                accumulate(nodes, grads, *a, |d| {
                    for (k, &src) in idx.iter().enumerate() {
                        let gr = &g[k * cols..(k + 1) * cols];
                        d[src * cols..(src + 1) * cols]
                            .iter_mut()
                            .zip(gr)
                            .for_each(|(x, gi)| *x += gi);
                    }
                });
            }
        }
        Op::SegmentSum(a, seg) => {
            let cols = y.cols();
            if cols > 0 {
                accumulate(nodes, grads, *a, |d| {
                    for (i, &s) in seg.iter().enumerate() {
                        let gr = &g[s * cols..(s + 1) * cols];
                        d[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(gr)
                            .for_each(|(x, gi)| *x += gi);
                    }
                });
            }
        }
        Op::SegmentSoftmax(a, seg) => {
            let segments = seg.iter().map(|&s| s + 1).max().unwrap_or(0);
            let mut dots = vec![0.0; segments];
            for ((&s, yi), gi) in seg.iter().zip(y.data()).zip(g) {
                dots[s] += yi * gi;
            }
            accumulate(nodes, grads, *a, |d| {
                for (i, &s) in seg.iter().enumerate() {
                    d[i] += y.data()[i] * (g[i] - dots[s]);
                }
            });
        }
        Op::RowSoftmax(a) => {
            let cols = y.cols();
            if cols > 0 {
                accumulate(nodes, grads, *a, |d| {
                    for ((dr, yr), gr) in d.chunks_mut(cols).zip(y.data().chunks(cols)).zip(g.chunks(cols)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((x, yi), gi) in dr.iter_mut().zip(yr).zip(gr) {
                            *x += yi * (gi - dot);
                        }
                    }
                });
            }
        }
        Op::SumAll(a) => {
            let s = g[0];
            accumulate(nodes, grads, *a, |d| d.iter_mut().for_each(|x| *x += s));
        }
        Op::SumCols(a) => {
            let cols = val(*a).cols();
            if cols > 0 {
                accumulate(nodes, grads, *a, |d| {
                    for (dr, gi) in d.chunks_mut(cols).zip(g) {
                        dr.iter_mut().for_each(|x| *x += gi);
                    }
                });
            }
        }
        Op::Exp(a) => {
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), yi) in d.iter_mut().zip(g).zip(y.data()) {
                    *x += gi * yi;
                }
            });
        }
        Op::Log(a) => {
            let av = val(*a);
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), ai) in d.iter_mut().zip(g).zip(av.data()) {
                    *x += gi / ai;
                }
            });
        }
        Op::Sin(a) => {
            let av = val(*a);
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), ai) in d.iter_mut().zip(g).zip(av.data()) {
                    *x += gi * ai.cos();
                }
            });
        }
        Op::Cos(a) => {
            let av = val(*a);
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), ai) in d.iter_mut().zip(g).zip(av.data()) {
                    *x -= gi * ai.sin();
                }
            });
        }
        Op::Relu(a) => {
            let av = val(*a);
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), ai) in d.iter_mut().zip(g).zip(av.data()) {
                    if *ai > 0.0 {
                        *x += gi;
                    }
                }
            });
        }
        Op::Sigmoid(a) => {
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), yi) in d.iter_mut().zip(g).zip(y.data()) {
                    *x += gi * yi * (1.0 - yi);
                }
            });
        }
        Op::Clamp(a, lo, hi) => {
            let av = val(*a);
            accumulate(nodes, grads, *a, |d| {
                for ((x, gi), ai) in d.iter_mut().zip(g).zip(av.data()) {
                    if *ai >= *lo && *ai <= *hi {
                        *x += gi;
                    }
                }
            });
        }
        Op::LayerNorm { input, inv_std } => {
            let cols = y.cols();
            if cols > 0 {
                let n = cols as f64;
                accumulate(nodes, grads, *input, |d| {
                    for (((dr, yr), gr), is) in d
                        .chunks_mut(cols)
                        .zip(y.data().chunks(cols))
                        .zip(g.chunks(cols))
                        .zip(inv_std)
                    {
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((x, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                            *x += is * (gi - mean_g - yi * mean_gy);
                        }
                    }
                });
            }
        }
    }
    Ok(())
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn map_unary(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.rows(), a.cols(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn binary(&self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(shape_err("matmul", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), 0.0, &mut out);
        Ok(self.binary(other, Tensor::new(m, n, out)?, Op::MatMul(self.id, other.id)))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        Ok(self.binary(other, Tensor::new(a.rows(), a.cols(), data)?, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        Ok(self.binary(other, Tensor::new(a.rows(), a.cols(), data)?, Op::Sub(self.id, other.id)))
    }

    /// Element-wise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        Ok(self.binary(other, Tensor::new(a.rows(), a.cols(), data)?, Op::Mul(self.id, other.id)))
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: Var<'t>) -> Result<Var<'t>> {
        let (a, r) = (self.value(), row.value());
        if r.rows() != 1 || r.cols() != a.cols() {
            return Err(shape_err("add_row", a.shape(), r.shape()));
        }
        let cols = a.cols();
        let mut data = a.data().to_vec();
        if cols > 0 {
            for chunk in data.chunks_mut(cols) {
                chunk.iter_mut().zip(r.data()).for_each(|(x, ri)| *x += ri);
            }
        }
        Ok(self.binary(row, Tensor::new(a.rows(), cols, data)?, Op::AddRow(self.id, row.id)))
    }

    /// Multiplies every row element-wise by a `1 x cols` row.
    pub fn mul_row(&self, row: Var<'t>) -> Result<Var<'t>> {
        let (a, r) = (self.value(), row.value());
        if r.rows() != 1 || r.cols() != a.cols() {
            return Err(shape_err("mul_row", a.shape(), r.shape()));
        }
        let cols = a.cols();
        let mut data = a.data().to_vec();
        if cols > 0 {
            for chunk in data.chunks_mut(cols) {
                chunk.iter_mut().zip(r.data()).for_each(|(x, ri)| *x *= ri);
            }
        }
        Ok(self.binary(row, Tensor::new(a.rows(), cols, data)?, Op::MulRow(self.id, row.id)))
    }

    /// Scales row `i` by `weights[i]` where `weights` is `rows x 1`.
    pub fn scale_rows(&self, weights: Var<'t>) -> Result<Var<'t>> {
        let (a, w) = (self.value(), weights.value());
        if w.cols() != 1 || w.rows() != a.rows() {
            return Err(shape_err("scale_rows", a.shape(), w.shape()));
        }
        let cols = a.cols();
        let mut data = a.data().to_vec();
        if cols > 0 {
            for (chunk, wi) in data.chunks_mut(cols).zip(w.data()) {
                chunk.iter_mut().for_each(|x| *x *= wi);
            }
        }
        Ok(self.binary(weights, Tensor::new(a.rows(), cols, data)?, Op::ScaleRows(self.id, weights.id)))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        let a = self.value();
        self.unary(map_unary(&a, |x| x * s), Op::Scale(self.id, s))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        let a = self.value();
        if start > end || end > a.cols() {
            return Err(shape_err("slice_cols", a.shape(), [start, end]));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(a.rows() * w);
        for r in 0..a.rows() {
            data.extend_from_slice(&a.row_slice(r)[start..end]);
        }
        Ok(self.unary(Tensor::new(a.rows(), w, data)?, Op::SliceCols(self.id, start)))
    }

    /// Output column `2j` is column `j` of `self`, column `2j + 1` is column `j`
    /// of `other`.
    pub fn interleave_cols(&self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("interleave_cols", &a, &b)?;
        let w = a.cols();
        let mut data = Vec::with_capacity(2 * a.len());
        for r in 0..a.rows() {
            for (x, y) in a.row_slice(r).iter().zip(b.row_slice(r)) {
                data.push(*x);
                data.push(*y);
            }
        }
        Ok(self.binary(other, Tensor::new(a.rows(), 2 * w, data)?, Op::InterleaveCols(self.id, other.id)))
    }

    /// Output row `k` is input row `index[k]`.
    pub fn gather_rows(&self, index: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        let cols = a.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            if i >= a.rows() {
                return Err(shape_err("gather_rows", a.shape(), [i, 0]));
            }
            data.extend_from_slice(a.row_slice(i));
        }
        Ok(self.unary(Tensor::new(index.len(), cols, data)?, Op::GatherRows(self.id, index.to_vec())))
    }

    /// Sums rows into `segments` buckets: output row `s` is the sum of input
    /// rows `i` with `segment[i] == s`, accumulated in ascending `i`.
    pub fn segment_sum(&self, segment: &[usize], segments: usize) -> Result<Var<'t>> {
        let a = self.value();
        if segment.len() != a.rows() {
            return Err(shape_err("segment_sum", a.shape(), [segment.len(), segments]));
        }
        let cols = a.cols();
        let mut out = vec![0.0; segments * cols];
        for (i, &s) in segment.iter().enumerate() {
            if s >= segments {
                return Err(shape_err("segment_sum", a.shape(), [s, segments]));
            }
            out[s * cols..(s + 1) * cols]
                .iter_mut()
                .zip(a.row_slice(i))
                .for_each(|(x, v)| *x += v);
        }
        Ok(self.unary(Tensor::new(segments, cols, out)?, Op::SegmentSum(self.id, segment.to_vec())))
    }

    /// Softmax of an `n x 1` column within groups given by `segment`.
    /// Max-subtracted per group.
    pub fn segment_softmax(&self, segment: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if a.cols() != 1 || segment.len() != a.rows() {
            return Err(shape_err("segment_softmax", a.shape(), [segment.len(), 1]));
        }
        let segments = segment.iter().map(|&s| s + 1).max().unwrap_or(0);
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (&s, &x) in segment.iter().zip(a.data()) {
            max[s] = max[s].max(x);
        }
        let mut out: Vec<f64> = segment.iter().zip(a.data()).map(|(&s, &x)| (x - max[s]).exp()).collect();
        let mut sums = vec![0.0; segments];
        for (&s, &e) in segment.iter().zip(&out) {
            sums[s] += e;
        }
        for (o, &s) in out.iter_mut().zip(segment) {
            *o /= sums[s];
        }
        Ok(self.unary(Tensor::new(a.rows(), 1, out)?, Op::SegmentSoftmax(self.id, segment.to_vec())))
    }

    /// Softmax of each row independently.
    pub fn softmax(&self) -> Var<'t> {
        let a = self.value();
        let cols = a.cols();
        let mut data = a.data().to_vec();
        if cols > 0 {
            for row in data.chunks_mut(cols) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.iter_mut().for_each(|x| *x = (*x - m).exp());
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
        self.unary(Tensor::new(a.rows(), cols, data).expect("same shape"), Op::RowSoftmax(self.id))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&self) -> Var<'t> {
        let a = self.value();
        self.unary(Tensor::scalar(a.data().iter().sum()), Op::SumAll(self.id))
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_cols(&self) -> Var<'t> {
        let a = self.value();
        let sums = (0..a.rows()).map(|r| a.row_slice(r).iter().sum()).collect();
        self.unary(Tensor::column(sums), Op::SumCols(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(map_unary(&self.value(), f64::exp), Op::Exp(self.id))
    }

    pub fn log(&self) -> Var<'t> {
        self.unary(map_unary(&self.value(), f64::ln), Op::Log(self.id))
    }

    pub fn sin(&self) -> Var<'t> {
        self.unary(map_unary(&self.value(), f64::sin), Op::Sin(self.id))
    }

    pub fn cos(&self) -> Var<'t> {
        self.unary(map_unary(&self.value(), f64::cos), Op::Cos(self.id))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(map_unary(&self.value(), |x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(
            map_unary(&self.value(), |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }),
            Op::Sigmoid(self.id),
        )
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(map_unary(&self.value(), |x| x.clamp(lo, hi)), Op::Clamp(self.id, lo, hi))
    }

    /// Row-wise normalization to zero mean and unit variance (biased), with
    /// [`LAYER_NORM_EPS`] added to the variance. No affine part.
    pub fn layer_norm(&self) -> Var<'t> {
        let a = self.value();
        let cols = a.cols();
        let mut data = a.data().to_vec();
        let mut inv_std = Vec::with_capacity(a.rows());
        if cols > 0 {
            let n = cols as f64;
            for row in data.chunks_mut(cols) {
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                row.iter_mut().for_each(|x| *x = (*x - mean) * is);
                inv_std.push(is);
            }
        }
        self.unary(
            Tensor::new(a.rows(), cols, data).expect("same shape"),
            Op::LayerNorm {
                input: self.id,
                inv_std,
            },
        )
    }
}
