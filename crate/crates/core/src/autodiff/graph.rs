//! Dynamically built reverse-mode computation graph.
//!
//! A [`Graph`] is created per forward pass. Every operation on a [`Var`]
//! evaluates eagerly and appends a node recording its parents and the rule
//! needed to push gradients back to them. [`Graph::backward`] walks the nodes
//! in reverse creation order, which is a valid topological order because a
//! node can only reference nodes created before it.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use super::params::ParamStore;
use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};
use crate::error::{EhdError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ParamRef {
    store: u64,
    index: usize,
}

/// How the right operand of a binary op maps onto the left operand's layout.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    Scalar,
    /// Right shape is a trailing suffix of the left shape.
    Suffix,
    /// Left is `[n, d]`, right is `[n, 1]`.
    Column(usize),
}

impl Broadcast {
    fn classify(op: &'static str, a: &[usize], b: &[usize], b_len: usize) -> Result<Self> {
        if a == b {
            Ok(Broadcast::Same)
        } else if b_len == 1 {
            Ok(Broadcast::Scalar)
        } else if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
            Ok(Broadcast::Suffix)
        } else if a.len() == 2 && b == [a[0], 1] {
            Ok(Broadcast::Column(a[1]))
        } else {
            Err(EhdError::shape(op, format!("cannot broadcast {:?} onto {:?}", b, a)))
        }
    }

    #[inline]
    fn index(self, i: usize, b_len: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::Suffix => i % b_len,
            Broadcast::Column(cols) => i / cols,
        }
    }
}

enum Op {
    Leaf,
    Add(usize, usize, Broadcast),
    Sub(usize, usize, Broadcast),
    Mul(usize, usize, Broadcast),
    Affine(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Exp(usize),
    Log(usize),
    Softplus(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm(usize, Vec<f64>),
    Cumsum(usize),
    Diff(usize),
    Sum(usize),
    Mean(usize),
    MaskedSum(usize, Arc<Vec<f64>>),
    MaskedMean(usize, Arc<Vec<f64>>, f64),
    SumRows(usize),
    MeanRows(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    SliceCols(usize, usize),
    Reshape(usize),
    StraightThrough(usize),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            Add(a, b, _) | Sub(a, b, _) | Mul(a, b, _) | MatMul(a, b) => vec![*a, *b],
            Affine(a, _)
            | Transpose(a)
            | Exp(a)
            | Log(a)
            | Softplus(a)
            | Sigmoid(a)
            | Tanh(a)
            | Relu(a)
            | Softmax(a)
            | LogSoftmax(a)
            | LayerNorm(a, _)
            | Cumsum(a)
            | Diff(a)
            | Sum(a)
            | Mean(a)
            | MaskedSum(a, _)
            | MaskedMean(a, _, _)
            | SumRows(a)
            | MeanRows(a)
            | GatherRows(a, _)
            | SliceCols(a, _)
            | Reshape(a)
            | StraightThrough(a) => vec![*a],
            ConcatRows(p) | ConcatCols(p) => p.clone(),
        }
    }
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamRef>,
}

/// Arena of nodes for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Tensor>>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.parents().iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
            param: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn leaf(&self, value: Arc<Tensor>, requires_grad: bool, param: Option<ParamRef>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that never receives gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(Arc::new(value), false, None)
    }

    /// Leaf that receives gradient.
    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.leaf(Arc::new(value), true, None)
    }

    /// Binds parameter `index` of `store`; trainable parameters receive gradient.
    pub fn param(&self, store: &ParamStore, index: usize) -> Var<'_> {
        let p = store.get(index);
        self.leaf(
            Arc::clone(&p.value),
            p.trainable,
            Some(ParamRef {
                store: store.id(),
                index,
            }),
        )
    }

    fn value(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Gradient of the last backward root with respect to `v`; zeros when unreachable.
    pub fn grad(&self, v: Var<'_>) -> Tensor {
        let grads = self.grads.borrow();
        match grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes.borrow()[v.id].value.shape()),
        }
    }

    /// Gradient per parameter of `store`, summed over every binding in this graph.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; store.len()];
        let nodes = self.nodes.borrow();
        let grads = self.grads.borrow();
        for (id, node) in nodes.iter().enumerate() {
            let Some(p) = node.param else { continue };
            if p.store != store.id() {
                continue;
            }
            let Some(g) = grads.get(id).and_then(|g| g.as_ref()) else {
                continue;
            };
            match &mut out[p.index] {
                Some(acc) => acc.add_assign(g),
                slot @ None => *slot = Some(g.clone()),
            }
        }
        out
    }

    /// Reverse pass from a single-valued `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return Err(EhdError::shape(
                "backward",
                format!("root must be scalar, got {:?}", nodes[root.id].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), 1.0));

        for id in (0..=root.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, &mut grads, id, &g);
            grads[id] = Some(g);
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }

    pub fn concat_rows<'g>(&'g self, parts: &[Var<'g>]) -> Result<Var<'g>> {
        if parts.is_empty() {
            return Err(EhdError::shape("concat_rows", "no inputs"));
        }
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| self.value(p.id)).collect();
        let first = values[0].shape();
        if first.is_empty() {
            return Err(EhdError::shape("concat_rows", "scalar inputs"));
        }
        let tail = &first[1..];
        let mut rows = 0;
        let mut data = Vec::new();
        for v in &values {
            if v.rank() == 0 || &v.shape()[1..] != tail {
                return Err(EhdError::shape(
                    "concat_rows",
                    format!("{:?} vs {:?}", v.shape(), first),
                ));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(tail);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::ConcatRows(parts.iter().map(|p| p.id).collect())))
    }

    pub fn concat_cols<'g>(&'g self, parts: &[Var<'g>]) -> Result<Var<'g>> {
        if parts.is_empty() {
            return Err(EhdError::shape("concat_cols", "no inputs"));
        }
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| self.value(p.id)).collect();
        let rows = values[0].rows();
        for v in &values {
            if v.rank() != 2 || v.rows() != rows {
                return Err(EhdError::shape(
                    "concat_cols",
                    format!("{:?} vs {:?}", v.shape(), values[0].shape()),
                ));
            }
        }
        let cols: usize = values.iter().map(|v| v.shape()[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row(r));
            }
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(t, Op::ConcatCols(parts.iter().map(|p| p.id).collect())))
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor>], id: usize) -> Option<&'a mut [f64]> {
    if !nodes[id].requires_grad {
        return None;
    }
    let g = grads[id].get_or_insert_with(|| Tensor::zeros(nodes[id].value.shape()));
    Some(g.data_mut())
}

fn backprop_node(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, g: &Tensor) {
    let out = &nodes[id].value;
    let gd = g.data();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
            let sign = if matches!(nodes[id].op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, &v) in ga.iter_mut().zip(gd) {
                    *x += v;
                }
            }
            let b_len = nodes[*b].value.len();
            if let Some(gb) = slot(nodes, grads, *b) {
                for (i, &v) in gd.iter().enumerate() {
                    gb[bc.index(i, b_len)] += sign * v;
                }
            }
        }
        Op::Mul(a, b, bc) => {
            let av = Arc::clone(&nodes[*a].value);
            let bv = Arc::clone(&nodes[*b].value);
            let b_len = bv.len();
            if let Some(ga) = slot(nodes, grads, *a) {
                for (i, &v) in gd.iter().enumerate() {
                    ga[i] += v * bv.data()[bc.index(i, b_len)];
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for (i, &v) in gd.iter().enumerate() {
                    gb[bc.index(i, b_len)] += v * av.data()[i];
                }
            }
        }
        Op::Affine(a, scale) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, &v) in ga.iter_mut().zip(gd) {
                    *x += scale * v;
                }
            }
        }
        Op::MatMul(a, b) => {
            let av = Arc::clone(&nodes[*a].value);
            let bv = Arc::clone(&nodes[*b].value);
            let (n, k) = (av.shape()[0], av.shape()[1]);
            let m = bv.shape()[1];
            if let Some(ga) = slot(nodes, grads, *a) {
                matmul_bt_into(gd, bv.data(), ga, n, m, k);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                matmul_at_into(av.data(), gd, gb, n, k, m);
            }
        }
        Op::Transpose(a) => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] += gd[i * c + j];
                    }
                }
            }
        }
        Op::Exp(a) => unary_back(nodes, grads, *a, gd, |_, y| y, out),
        Op::Log(a) => unary_back(nodes, grads, *a, gd, |x, _| 1.0 / x, out),
        Op::Softplus(a) => unary_back(nodes, grads, *a, gd, |x, _| sigmoid(x), out),
        Op::Sigmoid(a) => unary_back(nodes, grads, *a, gd, |_, y| y * (1.0 - y), out),
        Op::Tanh(a) => unary_back(nodes, grads, *a, gd, |_, y| 1.0 - y * y, out),
        Op::Relu(a) => unary_back(nodes, grads, *a, gd, |x, _| if x > 0.0 { 1.0 } else { 0.0 }, out),
        Op::Softmax(a) => {
            let w = last_dim(out.shape());
            if let Some(ga) = slot(nodes, grads, *a) {
                for (r, (y, gr)) in out.data().chunks(w).zip(gd.chunks(w)).enumerate() {
                    let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..w {
                        ga[r * w + j] += y[j] * (gr[j] - dot);
                    }
                }
            }
        }
        Op::LogSoftmax(a) => {
            let w = last_dim(out.shape());
            if let Some(ga) = slot(nodes, grads, *a) {
                for (r, (y, gr)) in out.data().chunks(w).zip(gd.chunks(w)).enumerate() {
                    let total: f64 = gr.iter().sum();
                    for j in 0..w {
                        ga[r * w + j] += gr[j] - y[j].exp() * total;
                    }
                }
            }
        }
        Op::LayerNorm(a, inv_std) => {
            let w = last_dim(out.shape());
            if let Some(ga) = slot(nodes, grads, *a) {
                for (r, (y, gr)) in out.data().chunks(w).zip(gd.chunks(w)).enumerate() {
                    let mean_g: f64 = gr.iter().sum::<f64>() / w as f64;
                    let mean_gy: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum::<f64>() / w as f64;
                    for j in 0..w {
                        ga[r * w + j] += inv_std[r] * (gr[j] - mean_g - y[j] * mean_gy);
                    }
                }
            }
        }
        Op::Cumsum(a) => {
            let w = out.row_len();
            let n = out.rows();
            if let Some(ga) = slot(nodes, grads, *a) {
                for c in 0..w {
                    let mut acc = 0.0;
                    for i in (0..n).rev() {
                        acc += gd[i * w + c];
                        ga[i * w + c] += acc;
                    }
                }
            }
        }
        Op::Diff(a) => {
            let w = out.row_len();
            let n = out.rows();
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..n {
                    for c in 0..w {
                        let next = if i + 1 < n { gd[(i + 1) * w + c] } else { 0.0 };
                        ga[i * w + c] += gd[i * w + c] - next;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for x in ga.iter_mut() {
                    *x += gd[0];
                }
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                let s = gd[0] / ga.len() as f64;
                for x in ga.iter_mut() {
                    *x += s;
                }
            }
        }
        Op::MaskedSum(a, mask) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, m) in ga.iter_mut().zip(mask.iter()) {
                    *x += gd[0] * m;
                }
            }
        }
        Op::MaskedMean(a, mask, total) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, m) in ga.iter_mut().zip(mask.iter()) {
                    *x += gd[0] * m / total;
                }
            }
        }
        Op::SumRows(a) | Op::MeanRows(a) => {
            let n = nodes[*a].value.rows();
            let scale = if matches!(nodes[id].op, Op::MeanRows(_)) {
                1.0 / n as f64
            } else {
                1.0
            };
            let w = gd.len();
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..n {
                    for j in 0..w {
                        ga[i * w + j] += scale * gd[j];
                    }
                }
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.len();
                if let Some(gp) = slot(nodes, grads, p) {
                    for (x, &v) in gp.iter_mut().zip(&gd[offset..offset + len]) {
                        *x += v;
                    }
                }
                offset += len;
            }
        }
        Op::ConcatCols(parts) => {
            let total = out.shape()[1];
            let rows = out.rows();
            let mut col = 0;
            for &p in parts {
                let w = nodes[p].value.shape()[1];
                if let Some(gp) = slot(nodes, grads, p) {
                    for r in 0..rows {
                        for j in 0..w {
                            gp[r * w + j] += gd[r * total + col + j];
                        }
                    }
                }
                col += w;
            }
        }
        Op::GatherRows(a, idx) => {
            let w = out.row_len();
            if let Some(ga) = slot(nodes, grads, *a) {
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..w {
                        ga[src * w + j] += gd[r * w + j];
                    }
                }
            }
        }
        Op::SliceCols(a, start) => {
            let total = nodes[*a].value.shape()[1];
            let w = out.shape()[1];
            let rows = out.rows();
            if let Some(ga) = slot(nodes, grads, *a) {
                for r in 0..rows {
                    for j in 0..w {
                        ga[r * total + start + j] += gd[r * w + j];
                    }
                }
            }
        }
        Op::Reshape(a) | Op::StraightThrough(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, &v) in ga.iter_mut().zip(gd) {
                    *x += v;
                }
            }
        }
    }
}

fn unary_back(
    nodes: &[Node],
    grads: &mut [Option<Tensor>],
    a: usize,
    gd: &[f64],
    deriv: impl Fn(f64, f64) -> f64,
    out: &Tensor,
) {
    let x = Arc::clone(&nodes[a].value);
    if let Some(ga) = slot(nodes, grads, a) {
        for i in 0..gd.len() {
            ga[i] += gd[i] * deriv(x.data()[i], out.data()[i]);
        }
    }
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.graph.nodes.borrow()[self.id].value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn grad(&self) -> Tensor {
        self.graph.grad(*self)
    }

    /// Ids of the nodes this one was computed from.
    pub fn parents(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].op.parents()
    }

    fn binary(
        self,
        other: Var<'g>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize, Broadcast) -> Op,
    ) -> Result<Var<'g>> {
        let a = self.value();
        let b = other.value();
        let bc = Broadcast::classify(op, a.shape(), b.shape(), b.len())?;
        let b_len = b.len();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, b.data()[bc.index(i, b_len)]))
            .collect();
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.graph.push(t, make(self.id, other.id, bc)))
    }

    /// Elementwise sum; `other` may broadcast (scalar, trailing suffix, or `[n,1]` column).
    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul)
    }

    /// `scale * self + shift`
    pub fn affine(self, scale: f64, shift: f64) -> Var<'g> {
        let t = self.value().map(|x| scale * x + shift);
        self.graph.push(t, Op::Affine(self.id, scale))
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.affine(c, 0.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        self.affine(1.0, c)
    }

    pub fn neg(self) -> Var<'g> {
        self.affine(-1.0, 0.0)
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        let a = self.value();
        let b = other.value();
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(EhdError::shape("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
        }
        let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut data = vec![0.0; n * m];
        matmul_into(a.data(), b.data(), &mut data, n, k, m);
        let t = Tensor::new(vec![n, m], data)?;
        Ok(self.graph.push(t, Op::MatMul(self.id, other.id)))
    }

    pub fn transpose(self) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(EhdError::shape("transpose", format!("{:?}", a.shape())));
        }
        let (r, c) = (a.shape()[0], a.shape()[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = a.data()[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], data)?;
        Ok(self.graph.push(t, Op::Transpose(self.id)))
    }

    pub fn exp(self) -> Var<'g> {
        let t = self.value().map(f64::exp);
        self.graph.push(t, Op::Exp(self.id))
    }

    /// Natural logarithm; rejects non-positive entries.
    pub fn ln(self) -> Result<Var<'g>> {
        let a = self.value();
        if let Some(bad) = a.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(EhdError::domain("log", format!("non-positive input {}", bad)));
        }
        let t = a.map(f64::ln);
        Ok(self.graph.push(t, Op::Log(self.id)))
    }

    pub fn softplus(self) -> Var<'g> {
        let t = self.value().map(softplus);
        self.graph.push(t, Op::Softplus(self.id))
    }

    pub fn sigmoid(self) -> Var<'g> {
        let t = self.value().map(sigmoid);
        self.graph.push(t, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'g> {
        let t = self.value().map(f64::tanh);
        self.graph.push(t, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Var<'g> {
        let t = self.value().map(|x| x.max(0.0));
        self.graph.push(t, Op::Relu(self.id))
    }

    /// Softmax over the last axis.
    pub fn softmax(self) -> Var<'g> {
        let a = self.value();
        let w = last_dim(a.shape());
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(w.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let t = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        self.graph.push(t, Op::Softmax(self.id))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(self) -> Var<'g> {
        let a = self.value();
        let w = last_dim(a.shape());
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(w.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let t = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        self.graph.push(t, Op::LogSoftmax(self.id))
    }

    /// Normalization to zero mean and unit variance over the last axis (no affine part).
    pub fn layer_norm(self, eps: f64) -> Var<'g> {
        let a = self.value();
        let w = last_dim(a.shape());
        let mut data = a.data().to_vec();
        let mut inv = Vec::with_capacity(data.len() / w.max(1));
        for row in data.chunks_mut(w.max(1)) {
            let mean = row.iter().sum::<f64>() / w as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64;
            let is = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv.push(is);
        }
        let t = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        self.graph.push(t, Op::LayerNorm(self.id, inv))
    }

    /// Running sum along the leading (sequence) axis.
    pub fn cumsum(self) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() == 0 {
            return Err(EhdError::shape("cumsum", "scalar input"));
        }
        let w = a.row_len();
        let mut data = a.data().to_vec();
        for i in 1..a.rows() {
            for c in 0..w {
                data[i * w + c] += data[(i - 1) * w + c];
            }
        }
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.graph.push(t, Op::Cumsum(self.id)))
    }

    /// Differences between consecutive entries along the leading axis, with
    /// `prepend` standing in for the entry before the first.
    pub fn diff(self, prepend: f64) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() == 0 {
            return Err(EhdError::shape("diff", "scalar input"));
        }
        let w = a.row_len();
        let src = a.data();
        let mut data = vec![0.0; src.len()];
        for i in 0..a.rows() {
            for c in 0..w {
                let prev = if i == 0 { prepend } else { src[(i - 1) * w + c] };
                data[i * w + c] = src[i * w + c] - prev;
            }
        }
        let t = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.graph.push(t, Op::Diff(self.id)))
    }

    pub fn sum(self) -> Var<'g> {
        let s = self.value().data().iter().sum();
        self.graph.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let a = self.value();
        if a.is_empty() {
            return Err(EhdError::shape("mean", "empty input"));
        }
        let s = a.data().iter().sum::<f64>() / a.len() as f64;
        Ok(self.graph.push(Tensor::scalar(s), Op::Mean(self.id)))
    }

    /// `sum(mask * self)` with a constant mask of the same size.
    pub fn masked_sum(self, mask: &[f64]) -> Result<Var<'g>> {
        let a = self.value();
        if mask.len() != a.len() {
            return Err(EhdError::shape(
                "masked_sum",
                format!("mask of {} for {:?}", mask.len(), a.shape()),
            ));
        }
        let s = a.data().iter().zip(mask).map(|(x, m)| x * m).sum();
        Ok(self
            .graph
            .push(Tensor::scalar(s), Op::MaskedSum(self.id, Arc::new(mask.to_vec()))))
    }

    /// `sum(mask * self) / sum(mask)`.
    pub fn masked_mean(self, mask: &[f64]) -> Result<Var<'g>> {
        let a = self.value();
        if mask.len() != a.len() {
            return Err(EhdError::shape(
                "masked_mean",
                format!("mask of {} for {:?}", mask.len(), a.shape()),
            ));
        }
        let total: f64 = mask.iter().sum();
        if total == 0.0 {
            return Err(EhdError::domain("masked_mean", "mask selects nothing"));
        }
        let s = a.data().iter().zip(mask).map(|(x, m)| x * m).sum::<f64>() / total;
        Ok(self.graph.push(
            Tensor::scalar(s),
            Op::MaskedMean(self.id, Arc::new(mask.to_vec()), total),
        ))
    }

    fn reduce_rows(self, mean: bool) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() == 0 || (mean && a.rows() == 0) {
            return Err(EhdError::shape("reduce_rows", format!("{:?}", a.shape())));
        }
        let w = a.row_len();
        let mut data = vec![0.0; w];
        for i in 0..a.rows() {
            for (d, &x) in data.iter_mut().zip(a.row(i)) {
                *d += x;
            }
        }
        if mean {
            let n = a.rows() as f64;
            data.iter_mut().for_each(|d| *d /= n);
        }
        let t = Tensor::new(a.shape()[1..].to_vec(), data)?;
        let op = if mean {
            Op::MeanRows(self.id)
        } else {
            Op::SumRows(self.id)
        };
        Ok(self.graph.push(t, op))
    }

    /// Sum over the leading axis.
    pub fn sum_rows(self) -> Result<Var<'g>> {
        self.reduce_rows(false)
    }

    /// Mean over the leading axis.
    pub fn mean_rows(self) -> Result<Var<'g>> {
        self.reduce_rows(true)
    }

    /// Rows of `self` at `index`, in that order.
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() == 0 {
            return Err(EhdError::shape("gather_rows", "scalar input"));
        }
        let w = a.row_len();
        let mut data = Vec::with_capacity(index.len() * w);
        for &i in index {
            if i >= a.rows() {
                return Err(EhdError::shape(
                    "gather_rows",
                    format!("row {} out of range for {:?}", i, a.shape()),
                ));
            }
            data.extend_from_slice(a.row(i));
        }
        let mut shape = vec![index.len()];
        shape.extend_from_slice(&a.shape()[1..]);
        let t = Tensor::new(shape, data)?;
        Ok(self.graph.push(t, Op::GatherRows(self.id, index.to_vec())))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() != 2 || start + len > a.shape()[1] {
            return Err(EhdError::shape(
                "slice_cols",
                format!("[{}..{}] of {:?}", start, start + len, a.shape()),
            ));
        }
        let rows = a.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&a.row(r)[start..start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.graph.push(t, Op::SliceCols(self.id, start)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let a = self.value();
        if shape.iter().product::<usize>() != a.len() {
            return Err(EhdError::shape("reshape", format!("{:?} -> {:?}", a.shape(), shape)));
        }
        let t = (*a).clone().reshaped(shape.to_vec());
        Ok(self.graph.push(t, Op::Reshape(self.id)))
    }

    /// Forward value `hard`, backward identity into `self`.
    pub fn straight_through(self, hard: Tensor) -> Result<Var<'g>> {
        let a = self.value();
        if a.shape() != hard.shape() {
            return Err(EhdError::shape(
                "straight_through",
                format!("{:?} vs {:?}", a.shape(), hard.shape()),
            ));
        }
        Ok(self.graph.push(hard, Op::StraightThrough(self.id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v<'g>(g: &'g Graph, data: &[f64]) -> Var<'g> {
        g.input(Tensor::vector(data.to_vec()))
    }

    #[test]
    fn log_of_exp_is_identity() {
        let g = Graph::new();
        let x = v(&g, &[0.7]);
        let y = x.exp().ln().unwrap().sum();
        assert!((y.item() - 0.7).abs() < 1e-15);
        g.backward(y).unwrap();
        assert!((x.grad().item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let g = Graph::new();
        let y = v(&g, &[0.0, 0.0]).softmax();
        assert_eq!(y.value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn cumsum_then_diff_round_trips() {
        let g = Graph::new();
        let c = v(&g, &[1.0, 2.0, 3.0]).cumsum().unwrap();
        assert_eq!(c.value().data(), &[1.0, 3.0, 6.0]);
        let d = c.diff(0.0).unwrap();
        assert_eq!(d.value().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn log_rejects_non_positive() {
        let g = Graph::new();
        let err = v(&g, &[1.0, 0.0]).ln().unwrap_err();
        assert!(err.to_string().contains("log"));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let err = a.matmul(b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        assert!(err.to_string().contains("[2, 3]"));
        let c = g.input(Tensor::zeros(&[4]));
        assert!(a.add(c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn unreachable_nodes_get_zero_gradient() {
        let g = Graph::new();
        let x = v(&g, &[1.0, 2.0]);
        let unrelated = v(&g, &[3.0]);
        let _ = unrelated.exp();
        let y = x.mul(x).unwrap().sum();
        g.backward(y).unwrap();
        assert_eq!(unrelated.grad().data(), &[0.0]);
        assert_eq!(x.grad().data(), &[2.0, 4.0]);
    }

    #[test]
    fn column_broadcast_multiplies_rows() {
        let g = Graph::new();
        let m = g.input(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = g.input(Tensor::matrix(2, 1, vec![10.0, 0.0]).unwrap());
        let y = m.mul(s).unwrap();
        assert_eq!(y.value().data(), &[10.0, 20.0, 0.0, 0.0]);
        g.backward(y.sum()).unwrap();
        assert_eq!(s.grad().data(), &[3.0, 7.0]);
    }

    #[test]
    fn straight_through_passes_gradient() {
        let g = Graph::new();
        let soft = v(&g, &[0.3, 0.7]);
        let hard = soft.straight_through(Tensor::vector(vec![0.0, 1.0])).unwrap();
        assert_eq!(hard.value().data(), &[0.0, 1.0]);
        let w = g.constant(Tensor::vector(vec![2.0, 5.0]));
        g.backward(hard.mul(w).unwrap().sum()).unwrap();
        assert_eq!(soft.grad().data(), &[2.0, 5.0]);
    }

    #[test]
    fn empty_row_tensors_are_supported() {
        let g = Graph::new();
        let e = g.input(Tensor::zeros(&[0, 3]));
        let f = g.input(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let c = g.concat_rows(&[e, f]).unwrap();
        assert_eq!(c.shape(), vec![1, 3]);
        let w = g.input(Tensor::zeros(&[3, 2]));
        assert_eq!(e.matmul(w).unwrap().shape(), vec![0, 2]);
    }
}
