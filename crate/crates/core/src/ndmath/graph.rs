//! Arena-backed reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the arena index is already a
//! topological order and the backward sweep is a reverse scan. Every node
//! carries a persistent gradient buffer; each call to [`Graph::backward`]
//! computes fresh adjoints and adds them into those buffers, so two passes
//! without [`Graph::zero_grad`] leave exactly twice the gradient.

use std::fmt;

use super::{MathError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Tag of the operation that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Affine,
    Conv1d,
    Relu,
    Concat,
    Stack,
    RepeatRows,
    MeanAxis,
    L2Normalize,
    Add,
    Scale,
    MatMulNt,
    Sum,
    CrossEntropy,
    Mse,
}

impl OpKind {
    /// Every differentiable kind, in a fixed order.
    pub const DIFFERENTIABLE: [OpKind; 14] = [
        OpKind::Affine,
        OpKind::Conv1d,
        OpKind::Relu,
        OpKind::Concat,
        OpKind::Stack,
        OpKind::RepeatRows,
        OpKind::MeanAxis,
        OpKind::L2Normalize,
        OpKind::Add,
        OpKind::Scale,
        OpKind::MatMulNt,
        OpKind::Sum,
        OpKind::CrossEntropy,
        OpKind::Mse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Affine => "affine",
            OpKind::Conv1d => "conv1d",
            OpKind::Relu => "relu",
            OpKind::Concat => "concat",
            OpKind::Stack => "stack",
            OpKind::RepeatRows => "repeat_rows",
            OpKind::MeanAxis => "mean_axis",
            OpKind::L2Normalize => "l2_normalize",
            OpKind::Add => "add",
            OpKind::Scale => "scale",
            OpKind::MatMulNt => "matmul_nt",
            OpKind::Sum => "sum",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::Mse => "mse",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::DIFFERENTIABLE
            .iter()
            .chain(std::iter::once(&OpKind::Leaf))
            .copied()
            .find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Conv1d { x: NodeId, kernel: NodeId, bias: NodeId },
    Relu(NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Stack(Vec<NodeId>),
    RepeatRows { x: NodeId, times: usize },
    MeanAxis { x: NodeId, axis: usize },
    L2Normalize(NodeId),
    Add(NodeId, NodeId),
    /// `exp(log_scale) * x`
    Scale { x: NodeId, log_scale: NodeId },
    MatMulNt(NodeId, NodeId),
    Sum(NodeId),
    CrossEntropy { logits: NodeId, targets: Vec<usize> },
    Mse { pred: NodeId, target: Tensor },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Affine { .. } => OpKind::Affine,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::Relu(_) => OpKind::Relu,
            Op::Concat { .. } => OpKind::Concat,
            Op::Stack(_) => OpKind::Stack,
            Op::RepeatRows { .. } => OpKind::RepeatRows,
            Op::MeanAxis { .. } => OpKind::MeanAxis,
            Op::L2Normalize(_) => OpKind::L2Normalize,
            Op::Add(..) => OpKind::Add,
            Op::Scale { .. } => OpKind::Scale,
            Op::MatMulNt(..) => OpKind::MatMulNt,
            Op::Sum(_) => OpKind::Sum,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Mse { .. } => OpKind::Mse,
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Affine { x, w, b } => vec![*x, *w, *b],
            Op::Conv1d { x, kernel, bias } => vec![*x, *kernel, *bias],
            Op::Relu(x)
            | Op::L2Normalize(x)
            | Op::Sum(x)
            | Op::RepeatRows { x, .. }
            | Op::MeanAxis { x, .. } => vec![*x],
            Op::Concat { parts, .. } | Op::Stack(parts) => parts.clone(),
            Op::Add(a, b) | Op::MatMulNt(a, b) => vec![*a, *b],
            Op::Scale { x, log_scale } => vec![*x, *log_scale],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::Mse { pred, .. } => vec![*pred],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    grad: Tensor,
    requires_grad: bool,
}

/// A differentiable computation graph.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    flops: u64,
    fault: Option<OpKind>,
}

/// Rows below this norm are treated as degenerate by [`Graph::l2_normalize`].
pub const MIN_NORM: f64 = 1e-12;

const FAULT_FACTOR: f64 = 1.5;

fn outer_len_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scales the backward contribution of one op kind by a wrong factor.
    /// Exists so gradient checks can be shown to catch a broken rule.
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    /// Multiply-add weighted operation count of all forward evaluations.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    /// Frozen leaf: never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            grad,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, flops: u64) -> Result<NodeId, MathError> {
        if !value.is_finite() {
            return Err(MathError::NonFinite(op.kind().name().to_string()));
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.flops += flops;
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node {
            value,
            op,
            grad,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.data_mut().fill(0.0);
        }
    }

    /// `x · W + b`. A rank-1 `x` is treated as a single row and yields a rank-1 result.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let shape_err = || MathError::Shape {
            op: "affine",
            lhs: xv.shape().to_vec(),
            rhs: wv.shape().to_vec(),
        };
        if wv.rank() != 2 || xv.rank() == 0 || xv.rank() > 2 {
            return Err(shape_err());
        }
        let (n, p) = (xv.rows(), xv.cols());
        let q = wv.shape()[1];
        if wv.shape()[0] != p {
            return Err(shape_err());
        }
        if bv.shape() != [q] {
            return Err(MathError::Shape {
                op: "affine bias",
                lhs: wv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; n * q];
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        for i in 0..n {
            let orow = &mut out[i * q..(i + 1) * q];
            orow.copy_from_slice(bd);
            for k in 0..p {
                let a = xd[i * p + k];
                let wrow = &wd[k * q..(k + 1) * q];
                for (o, w) in orow.iter_mut().zip(wrow) {
                    *o += a * w;
                }
            }
        }
        let shape = if xv.rank() == 1 { vec![q] } else { vec![n, q] };
        let value = Tensor::new(&shape, out)?;
        self.push(value, Op::Affine { x, w, b }, 2 * (n * p * q) as u64)
    }

    /// Temporal convolution of `x: [T, D]` with `kernel: [k, D, Co]`, zero "same" padding.
    pub fn conv1d(&mut self, x: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId, MathError> {
        let (xv, kv, bv) = (self.value(x), self.value(kernel), self.value(bias));
        if xv.rank() != 2 || kv.rank() != 3 || kv.shape()[1] != xv.shape()[1] {
            return Err(MathError::Shape {
                op: "conv1d",
                lhs: xv.shape().to_vec(),
                rhs: kv.shape().to_vec(),
            });
        }
        let (t_len, d) = (xv.shape()[0], xv.shape()[1]);
        let (k, co) = (kv.shape()[0], kv.shape()[2]);
        if k % 2 == 0 {
            return Err(MathError::Config(format!("conv1d kernel size {k} must be odd")));
        }
        if t_len == 0 {
            return Err(MathError::Config("conv1d needs at least one timestep".into()));
        }
        if k > 2 * t_len + 1 {
            return Err(MathError::Config(format!(
                "conv1d kernel size {k} exceeds 2T+1 = {}",
                2 * t_len + 1
            )));
        }
        if bv.shape() != [co] {
            return Err(MathError::Shape {
                op: "conv1d bias",
                lhs: kv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let half = (k / 2) as isize;
        let (xd, kd, bd) = (xv.data(), kv.data(), bv.data());
        let mut out = vec![0.0; t_len * co];
        for t in 0..t_len {
            let orow = &mut out[t * co..(t + 1) * co];
            orow.copy_from_slice(bd);
            for j in 0..k {
                let src = t as isize + j as isize - half;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let xrow = &xd[src as usize * d..(src as usize + 1) * d];
                for (c, &xval) in xrow.iter().enumerate() {
                    let krow = &kd[(j * d + c) * co..(j * d + c + 1) * co];
                    for (o, kval) in orow.iter_mut().zip(krow) {
                        *o += xval * kval;
                    }
                }
            }
        }
        let value = Tensor::new(&[t_len, co], out)?;
        let flops = 2 * (t_len * k * d * co) as u64;
        self.push(value, Op::Conv1d { x, kernel, bias }, flops)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, MathError> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), 0)
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, MathError> {
        let first = self
            .value(*parts.first().ok_or_else(|| MathError::Contract("concat of nothing".into()))?)
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(MathError::Shape {
                op: "concat axis",
                lhs: first,
                rhs: vec![axis],
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(MathError::Shape {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let (outer, _, inner) = outer_len_inner(&first, axis);
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(&out_shape, out)?;
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            0,
        )
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId, MathError> {
        let first = self
            .value(*parts.first().ok_or_else(|| MathError::Contract("stack of nothing".into()))?)
            .shape()
            .to_vec();
        let mut out = Vec::with_capacity(parts.len() * first.iter().product::<usize>());
        for &p in parts {
            let v = self.value(p);
            if v.shape() != first.as_slice() {
                return Err(MathError::Shape {
                    op: "stack",
                    lhs: first,
                    rhs: v.shape().to_vec(),
                });
            }
            out.extend_from_slice(v.data());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first);
        let value = Tensor::new(&shape, out)?;
        self.push(value, Op::Stack(parts.to_vec()), 0)
    }

    /// Tiles a vector `[d]` into `[times, d]`.
    pub fn repeat_rows(&mut self, x: NodeId, times: usize) -> Result<NodeId, MathError> {
        let v = self.value(x);
        if v.rank() != 1 {
            return Err(MathError::Shape {
                op: "repeat_rows",
                lhs: v.shape().to_vec(),
                rhs: vec![times],
            });
        }
        let d = v.numel();
        let mut out = Vec::with_capacity(times * d);
        for _ in 0..times {
            out.extend_from_slice(v.data());
        }
        let value = Tensor::new(&[times, d], out)?;
        self.push(value, Op::RepeatRows { x, times }, 0)
    }

    /// Arithmetic mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, MathError> {
        let v = self.value(x);
        if axis >= v.rank() || v.shape()[axis] == 0 {
            return Err(MathError::Shape {
                op: "mean_axis",
                lhs: v.shape().to_vec(),
                rhs: vec![axis],
            });
        }
        let (outer, len, inner) = outer_len_inner(v.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        let data = v.data();
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    out[o * inner + i] += data[base + i];
                }
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        let mut shape = v.shape().to_vec();
        shape.remove(axis);
        let flops = v.numel() as u64;
        let value = Tensor::new(&shape, out)?;
        self.push(value, Op::MeanAxis { x, axis }, flops)
    }

    /// Scales every row (the whole vector for rank 1) to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: NodeId) -> Result<NodeId, MathError> {
        let v = self.value(x);
        if v.rank() == 0 || v.rank() > 2 {
            return Err(MathError::Shape {
                op: "l2_normalize",
                lhs: v.shape().to_vec(),
                rhs: vec![],
            });
        }
        let cols = v.cols();
        let mut out = v.data().to_vec();
        for (i, norm) in v.row_norms().into_iter().enumerate() {
            if norm.is_nan() || norm < MIN_NORM {
                return Err(MathError::Degenerate(format!(
                    "l2_normalize: row {i} has norm {norm:e}"
                )));
            }
            out[i * cols..(i + 1) * cols].iter_mut().for_each(|x| *x /= norm);
        }
        let flops = 3 * v.numel() as u64;
        let value = Tensor::new(v.shape(), out)?;
        self.push(value, Op::L2Normalize(x), flops)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(MathError::Shape {
                op: "add",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut value = av.clone();
        value.add_assign(bv);
        let flops = value.numel() as u64;
        self.push(value, Op::Add(a, b), flops)
    }

    /// `exp(log_scale) * x` for a single-element `log_scale`.
    pub fn scale(&mut self, x: NodeId, log_scale: NodeId) -> Result<NodeId, MathError> {
        let s = self.value(log_scale);
        if s.numel() != 1 {
            return Err(MathError::Shape {
                op: "scale",
                lhs: self.value(x).shape().to_vec(),
                rhs: s.shape().to_vec(),
            });
        }
        let factor = s.item().exp();
        let value = self.value(x).map(|v| v * factor);
        let flops = value.numel() as u64;
        self.push(value, Op::Scale { x, log_scale }, flops)
    }

    /// `a · bᵀ` for `a: [n, D]`, `b: [m, D]`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, MathError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(MathError::Shape {
                op: "matmul_nt",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (n, m, d) = (av.shape()[0], bv.shape()[0], av.shape()[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = av.row(i).iter().zip(bv.row(j)).map(|(x, y)| x * y).sum();
            }
        }
        let value = Tensor::new(&[n, m], out)?;
        self.push(value, Op::MatMulNt(a, b), 2 * (n * m * d) as u64)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, MathError> {
        let v = self.value(x);
        let flops = v.numel() as u64;
        let value = Tensor::scalar(v.sum());
        self.push(value, Op::Sum(x), flops)
    }

    /// Mean over rows of `-log softmax(logits)[i, target_i]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, MathError> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.shape()[0] != targets.len() || targets.is_empty() {
            return Err(MathError::Shape {
                op: "cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let m = lv.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= m) {
            return Err(MathError::Index { index: bad, bound: m });
        }
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = lv.row(i);
            let (max, lse) = shifted_log_sum_exp(row);
            total += lse - (row[t] - max);
        }
        let flops = 3 * lv.numel() as u64;
        let value = Tensor::scalar(total / targets.len() as f64);
        self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            flops,
        )
    }

    /// Mean squared error against a fixed target.
    pub fn mse(&mut self, pred: NodeId, target: Tensor) -> Result<NodeId, MathError> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() || pv.numel() == 0 {
            return Err(MathError::Shape {
                op: "mse",
                lhs: pv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let total: f64 = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let flops = 3 * pv.numel() as u64;
        let value = Tensor::scalar(total / pv.numel() as f64);
        self.push(value, Op::Mse { pred, target }, flops)
    }

    /// Accumulates `d loss / d node` into every node reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), MathError> {
        if self.value(loss).numel() != 1 {
            return Err(MathError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let ones = Tensor::full(self.value(loss).shape(), 1.0);
        self.backward_with(loss, ones)
    }

    /// Vector-Jacobian product: accumulates the gradient of `⟨cotangent, root⟩`
    /// for a root of any shape.
    pub fn backward_with(&mut self, root: NodeId, cotangent: Tensor) -> Result<(), MathError> {
        if cotangent.shape() != self.value(root).shape() {
            return Err(MathError::Shape {
                op: "backward",
                lhs: self.value(root).shape().to_vec(),
                rhs: cotangent.shape().to_vec(),
            });
        }
        let loss = root;
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(cotangent);
        for idx in (0..=loss.0).rev() {
            let Some(dout) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let contributions = self.local_grads(idx, &dout);
            for (parent, mut g) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                if self.fault == Some(self.nodes[idx].op.kind()) {
                    g.data_mut().iter_mut().for_each(|x| *x *= FAULT_FACTOR);
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            self.nodes[idx].grad.add_assign(&dout);
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, dout: &Tensor) -> Vec<(NodeId, Tensor)> {
        let node = &self.nodes[idx];
        let g = dout.data();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, p, q) = (xv.rows(), xv.cols(), wv.shape()[1]);
                let (xd, wd) = (xv.data(), wv.data());
                let mut dx = vec![0.0; n * p];
                let mut dw = vec![0.0; p * q];
                let mut db = vec![0.0; q];
                for i in 0..n {
                    let grow = &g[i * q..(i + 1) * q];
                    for (bj, gj) in db.iter_mut().zip(grow) {
                        *bj += gj;
                    }
                    for k in 0..p {
                        let wrow = &wd[k * q..(k + 1) * q];
                        dx[i * p + k] = wrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let a = xd[i * p + k];
                        for (dwj, gj) in dw[k * q..(k + 1) * q].iter_mut().zip(grow) {
                            *dwj += a * gj;
                        }
                    }
                }
                vec![
                    (*x, tensor_like(xv, dx)),
                    (*w, tensor_like(wv, dw)),
                    (*b, Tensor::vector(db)),
                ]
            }
            Op::Conv1d { x, kernel, bias } => {
                let (xv, kv) = (self.value(*x), self.value(*kernel));
                let (t_len, d) = (xv.shape()[0], xv.shape()[1]);
                let (k, co) = (kv.shape()[0], kv.shape()[2]);
                let half = (k / 2) as isize;
                let (xd, kd) = (xv.data(), kv.data());
                let mut dx = vec![0.0; t_len * d];
                let mut dk = vec![0.0; k * d * co];
                let mut db = vec![0.0; co];
                for t in 0..t_len {
                    let grow = &g[t * co..(t + 1) * co];
                    for (bj, gj) in db.iter_mut().zip(grow) {
                        *bj += gj;
                    }
                    for j in 0..k {
                        let src = t as isize + j as isize - half;
                        if src < 0 || src >= t_len as isize {
                            continue;
                        }
                        let src = src as usize;
                        for c in 0..d {
                            let base = (j * d + c) * co;
                            let krow = &kd[base..base + co];
                            dx[src * d + c] += krow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                            let xval = xd[src * d + c];
                            for (dkv, gj) in dk[base..base + co].iter_mut().zip(grow) {
                                *dkv += xval * gj;
                            }
                        }
                    }
                }
                vec![
                    (*x, tensor_like(xv, dx)),
                    (*kernel, tensor_like(kv, dk)),
                    (*bias, Tensor::vector(db)),
                ]
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = xv
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > 0.0 { gi } else { 0.0 })
                    .collect();
                vec![(*x, tensor_like(xv, dx))]
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = outer_len_inner(shape, *axis);
                let mut offset = 0;
                let mut result = Vec::with_capacity(parts.len());
                for &p in parts {
                    let pv = self.value(p);
                    let len = pv.shape()[*axis];
                    let mut dp = Vec::with_capacity(pv.numel());
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        dp.extend_from_slice(&g[start..start + len * inner]);
                    }
                    offset += len;
                    result.push((p, tensor_like(pv, dp)));
                }
                result
            }
            Op::Stack(parts) => {
                let chunk = node.value.numel() / parts.len();
                parts
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        (p, tensor_like(self.value(p), g[i * chunk..(i + 1) * chunk].to_vec()))
                    })
                    .collect()
            }
            Op::RepeatRows { x, times } => {
                let d = self.value(*x).numel();
                let mut dx = vec![0.0; d];
                for r in 0..*times {
                    for (a, b) in dx.iter_mut().zip(&g[r * d..(r + 1) * d]) {
                        *a += b;
                    }
                }
                vec![(*x, Tensor::vector(dx))]
            }
            Op::MeanAxis { x, axis } => {
                let xv = self.value(*x);
                let (outer, len, inner) = outer_len_inner(xv.shape(), *axis);
                let inv = 1.0 / len as f64;
                let mut dx = vec![0.0; xv.numel()];
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            dx[base + i] = g[o * inner + i] * inv;
                        }
                    }
                }
                vec![(*x, tensor_like(xv, dx))]
            }
            Op::L2Normalize(x) => {
                let xv = self.value(*x);
                let y = &node.value;
                let cols = xv.cols();
                let norms = xv.row_norms();
                let mut dx = vec![0.0; xv.numel()];
                for (i, norm) in norms.into_iter().enumerate() {
                    let yr = y.row(i);
                    let gr = &g[i * cols..(i + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dx[i * cols + c] = (gr[c] - yr[c] * dot) / norm;
                    }
                }
                vec![(*x, tensor_like(xv, dx))]
            }
            Op::Add(a, b) => vec![(*a, dout.clone()), (*b, dout.clone())],
            Op::Scale { x, log_scale } => {
                let factor = self.value(*log_scale).item().exp();
                let dx = dout.map(|v| v * factor);
                let ds: f64 = node.value.data().iter().zip(g).map(|(y, gi)| y * gi).sum();
                let ls = self.value(*log_scale);
                vec![(*x, dx), (*log_scale, Tensor::full(ls.shape(), ds))]
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, m, d) = (av.shape()[0], bv.shape()[0], av.shape()[1]);
                let mut da = vec![0.0; n * d];
                let mut db = vec![0.0; m * d];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g[i * m + j];
                        for c in 0..d {
                            da[i * d + c] += gij * bv.data()[j * d + c];
                            db[j * d + c] += gij * av.data()[i * d + c];
                        }
                    }
                }
                vec![(*a, tensor_like(av, da)), (*b, tensor_like(bv, db))]
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                vec![(*x, Tensor::full(xv.shape(), g[0]))]
            }
            Op::CrossEntropy { logits, targets } => {
                let lv = self.value(*logits);
                let m = lv.shape()[1];
                let scale = g[0] / targets.len() as f64;
                let mut dl = vec![0.0; lv.numel()];
                for (i, &t) in targets.iter().enumerate() {
                    let row = lv.row(i);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for j in 0..m {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        dl[i * m + j] = scale * (exps[j] / z - onehot);
                    }
                }
                vec![(*logits, tensor_like(lv, dl))]
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred);
                let scale = 2.0 * g[0] / pv.numel() as f64;
                let dp = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                vec![(*pred, tensor_like(pv, dp))]
            }
        }
    }
}

/// Returns `(max, ln Σ exp(x - max))`. The arg-max term contributes exactly
/// one, so the rest goes through `ln_1p` and confident rows keep precision.
fn shifted_log_sum_exp(row: &[f64]) -> (f64, f64) {
    let (arg, max) = row
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
    let rest: f64 = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, x)| (x - max).exp())
        .sum();
    (max, rest.ln_1p())
}

fn tensor_like(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(like.shape(), data).expect("gradient has the parent's shape")
}
