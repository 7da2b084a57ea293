//! Expression graphs with cached forward values and reverse-mode gradients.
//!
//! Nodes are appended in construction order, so every node's parents precede
//! it and the node vector is already a topological order. A graph is built
//! once and evaluated many times with different input bindings; parameter
//! values live inside the graph and are read at evaluation time.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::activation::{soft_threshold, softmax_into, Activation};
use crate::error::GraphError;
use crate::tensor::{matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor};

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Input-name → tensor map consumed by [`Graph::eval`].
pub type Bindings = BTreeMap<String, Tensor>;

/// Convenience constructor for [`Bindings`].
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, Tensor)>) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone)]
pub enum Op {
    Input(String),
    Param(String),
    Const(Tensor),
    /// Element-wise; either side may be a one-element tensor.
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    /// `[m,k]·[k,n]`, `[m,k]·[k]` or `[k]·[k,n]`.
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId, Vec<usize>),
    /// Adds a `[n]` vector to every row of a `[b,n]` matrix.
    AddRow(NodeId, NodeId),
    /// Concatenation along the last axis.
    Concat(Vec<NodeId>),
    /// Columns `start..start+len` of the last axis.
    SliceCols(NodeId, usize, usize),
    Act(NodeId, Activation),
    /// Soft threshold with a node-valued threshold: one-element, same shape,
    /// or a `[n]` vector broadcast over the rows of a `[b,n]` input.
    ShrinkBy(NodeId, NodeId),
    /// Softmax over the last axis.
    Softmax(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// `(1/n) Σ ||pred_t - target_t||²` where `n` is the number of rows
    /// (rank 2), the length (rank 1) or 1 (rank 0).
    Mse(NodeId, NodeId),
    /// `-(1/n) Σ target · ln(clamp(prob))`, rows are samples.
    CrossEntropy(NodeId, NodeId),
    /// Block-Toeplitz convolution matrix `[signal_len, C·M]` built from a
    /// `[C, L]` kernel bank, with `M = signal_len - L + 1`.
    Toeplitz { kernels: NodeId, signal_len: usize },
    /// Row `t` of the output is row `t - shift` of the input (zero padded).
    ShiftRows(NodeId, isize),
    /// Row `t` of the output is `mats[t] · row_t(input)`.
    RowMatVec(Arc<Vec<Tensor>>, NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::AddRow(..) => "add_row",
            Op::Concat(_) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::Act(..) => "activation",
            Op::ShrinkBy(..) => "shrink_by",
            Op::Softmax(_) => "softmax",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Mse(..) => "mse",
            Op::CrossEntropy(..) => "cross_entropy",
            Op::Toeplitz { .. } => "toeplitz",
            Op::ShiftRows(..) => "shift_rows",
            Op::RowMatVec(..) => "row_matvec",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Const(_) => Vec::new(),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::ShrinkBy(a, b)
            | Op::Mse(a, b)
            | Op::CrossEntropy(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a, _)
            | Op::SliceCols(a, ..)
            | Op::Act(a, _)
            | Op::Softmax(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::ShiftRows(a, _)
            | Op::RowMatVec(_, a) => vec![*a],
            Op::Toeplitz { kernels, .. } => vec![*kernels],
            Op::Concat(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    label: Option<String>,
    value: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Tensor>,
    param_nodes: BTreeMap<String, NodeId>,
    input_nodes: BTreeMap<String, NodeId>,
    output: Option<NodeId>,
    last_root: Option<NodeId>,
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

    fn push(&mut self, op: Op) -> NodeId {
        for p in op.parents() {
            assert!(p.0 < self.nodes.len(), "parent {} does not exist", p.0);
        }
        self.nodes.push(Node {
            op,
            label: None,
            value: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Attaches a human-readable label used in error messages.
    pub fn label(&mut self, id: NodeId, label: impl Into<String>) -> NodeId {
        self.nodes[id.0].label = Some(label.into());
        id
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    /// Named input leaf. Repeated calls with the same name return the same node.
    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.input_nodes.get(name) {
            return id;
        }
        let id = self.push(Op::Input(name.to_string()));
        self.input_nodes.insert(name.to_string(), id);
        id
    }

    /// Trainable leaf. If `name` already exists the existing node is returned
    /// and `init` is ignored, which is how weights are shared.
    pub fn param(&mut self, name: &str, init: Tensor) -> NodeId {
        if let Some(&id) = self.param_nodes.get(name) {
            return id;
        }
        let id = self.push(Op::Param(name.to_string()));
        self.param_nodes.insert(name.to_string(), id);
        self.params.insert(name.to_string(), init);
        id
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn param_value(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), GraphError> {
        match self.params.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(GraphError::UnknownParameter(name.to_string())),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(a, factor))
    }
    pub fn offset(&mut self, a: NodeId, shift: f64) -> NodeId {
        self.push(Op::Offset(a, shift))
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }
    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose(a))
    }
    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        self.push(Op::Reshape(a, shape))
    }
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        self.push(Op::AddRow(a, row))
    }
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        self.push(Op::Concat(parts.to_vec()))
    }
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        self.push(Op::SliceCols(a, start, len))
    }
    pub fn act(&mut self, a: NodeId, kind: Activation) -> NodeId {
        self.push(Op::Act(a, kind))
    }
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.act(a, Activation::Relu)
    }
    pub fn shrink_by(&mut self, x: NodeId, threshold: NodeId) -> NodeId {
        self.push(Op::ShrinkBy(x, threshold))
    }
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax(a))
    }
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        self.push(Op::Mse(pred, target))
    }
    pub fn cross_entropy(&mut self, probs: NodeId, targets: NodeId) -> NodeId {
        self.push(Op::CrossEntropy(probs, targets))
    }
    pub fn toeplitz(&mut self, kernels: NodeId, signal_len: usize) -> NodeId {
        self.push(Op::Toeplitz {
            kernels,
            signal_len,
        })
    }
    pub fn shift_rows(&mut self, a: NodeId, shift: isize) -> NodeId {
        self.push(Op::ShiftRows(a, shift))
    }
    pub fn row_matvec(&mut self, mats: Arc<Vec<Tensor>>, a: NodeId) -> NodeId {
        self.push(Op::RowMatVec(mats, a))
    }

    /// `x·W + b` for a `[batch, in]` input, `W: [in, out]`, `b: [out]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    fn describe(&self, id: NodeId) -> String {
        let node = &self.nodes[id.0];
        match &node.label {
            Some(l) => format!("#{} {} ({l})", id.0, node.op.name()),
            None => format!("#{} {}", id.0, node.op.name()),
        }
    }

    /// Cached forward value from the last evaluation.
    pub fn value(&self, id: NodeId) -> Result<&Tensor, GraphError> {
        self.nodes[id.0]
            .value
            .as_ref()
            .ok_or_else(|| GraphError::NotEvaluated(self.describe(id)))
    }

    /// Evaluates the designated output node.
    pub fn eval(&mut self, bindings: &Bindings) -> Result<Tensor, GraphError> {
        let root = self.output.unwrap_or(NodeId(self.nodes.len() - 1));
        self.eval_node(root, bindings)
    }

    /// Evaluates `root` and every node it depends on. Other cached values are
    /// cleared.
    pub fn eval_node(&mut self, root: NodeId, bindings: &Bindings) -> Result<Tensor, GraphError> {
        let needed = self.ancestors(root);
        for node in &mut self.nodes {
            node.value = None;
        }
        self.last_root = None;
        for i in 0..=root.0 {
            if !needed[i] {
                continue;
            }
            let value = self.forward(NodeId(i), bindings)?;
            if !value.is_finite() {
                return Err(GraphError::NonFinite(self.describe(NodeId(i))));
            }
            self.nodes[i].value = Some(value);
        }
        self.last_root = Some(root);
        Ok(self.nodes[root.0].value.clone().expect("root evaluated"))
    }

    fn ancestors(&self, root: NodeId) -> Vec<bool> {
        let mut needed = vec![false; root.0 + 1];
        needed[root.0] = true;
        for i in (0..=root.0).rev() {
            if needed[i] {
                for p in self.nodes[i].op.parents() {
                    needed[p.0] = true;
                }
            }
        }
        needed
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].value.as_ref().expect("parent evaluated")
    }

    fn mismatch(&self, id: NodeId, detail: String) -> GraphError {
        GraphError::ShapeMismatch {
            node: self.describe(id),
            detail,
        }
    }

    fn forward(&self, id: NodeId, bindings: &Bindings) -> Result<Tensor, GraphError> {
        let op = &self.nodes[id.0].op;
        match op {
            Op::Input(name) => bindings
                .get(name)
                .cloned()
                .ok_or_else(|| GraphError::UnboundInput(name.clone())),
            Op::Param(name) => self
                .params
                .get(name)
                .cloned()
                .ok_or_else(|| GraphError::UnknownParameter(name.clone())),
            Op::Const(t) => Ok(t.clone()),
            Op::Add(a, b) => self.broadcast(id, *a, *b, |x, y| x + y),
            Op::Sub(a, b) => self.broadcast(id, *a, *b, |x, y| x - y),
            Op::Mul(a, b) => self.broadcast(id, *a, *b, |x, y| x * y),
            Op::Scale(a, f) => Ok(self.val(*a).map(|v| v * f)),
            Op::Offset(a, c) => Ok(self.val(*a).map(|v| v + c)),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k, n, shape) = matmul_dims(ta, tb)
                    .ok_or_else(|| self.mismatch(id, format!("{:?} · {:?}", ta.shape(), tb.shape())))?;
                Tensor::new(shape, matmul_raw(ta.data(), tb.data(), m, k, n))
            }
            Op::Transpose(a) => {
                let t = self.val(*a);
                if t.rank() != 2 {
                    return Err(self.mismatch(id, format!("transpose of {:?}", t.shape())));
                }
                Ok(t.transpose())
            }
            Op::Reshape(a, shape) => self
                .val(*a)
                .clone()
                .reshaped(shape.clone())
                .map_err(|e| self.mismatch(id, e.to_string())),
            Op::AddRow(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let cols = ta.cols();
                if ta.rank() > 2 || tb.len() != cols {
                    return Err(self.mismatch(id, format!("{:?} + row {:?}", ta.shape(), tb.shape())));
                }
                let mut out = ta.clone();
                for row in out.data_mut().chunks_mut(cols) {
                    for (o, r) in row.iter_mut().zip(tb.data()) {
                        *o += r;
                    }
                }
                Ok(out)
            }
            Op::Concat(parts) => self.concat_forward(id, parts),
            Op::SliceCols(a, start, len) => {
                let t = self.val(*a);
                let cols = t.cols();
                if t.rank() == 0 || t.rank() > 2 || start + len > cols || *len == 0 {
                    return Err(self.mismatch(id, format!("slice {start}+{len} of {:?}", t.shape())));
                }
                let mut data = Vec::with_capacity(t.rows() * len);
                for row in t.data().chunks(cols) {
                    data.extend_from_slice(&row[*start..start + len]);
                }
                let shape = if t.rank() == 1 {
                    vec![*len]
                } else {
                    vec![t.rows(), *len]
                };
                Tensor::new(shape, data)
            }
            Op::Act(a, kind) => Ok(self.val(*a).map(|v| kind.apply(v))),
            Op::ShrinkBy(x, b) => {
                let (tx, tb) = (self.val(*x), self.val(*b));
                let idx = threshold_index(tx, tb)
                    .ok_or_else(|| self.mismatch(id, format!("shrink {:?} by {:?}", tx.shape(), tb.shape())))?;
                let data = tx
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| soft_threshold(v, tb.data()[idx(i)]))
                    .collect();
                Tensor::new(tx.shape().to_vec(), data)
            }
            Op::Softmax(a) => {
                let t = self.val(*a);
                let cols = t.cols();
                let mut out = t.clone();
                for (src, dst) in t.data().chunks(cols).zip(out.data_mut().chunks_mut(cols)) {
                    softmax_into(src, dst);
                }
                Ok(out)
            }
            Op::Sum(a) => Ok(Tensor::scalar(self.val(*a).sum())),
            Op::Mean(a) => {
                let t = self.val(*a);
                Ok(Tensor::scalar(t.sum() / t.len() as f64))
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (self.val(*p), self.val(*t));
                if tp.shape() != tt.shape() {
                    return Err(self.mismatch(id, format!("mse {:?} vs {:?}", tp.shape(), tt.shape())));
                }
                let n = batch_count(tp) as f64;
                let total: f64 = tp
                    .data()
                    .iter()
                    .zip(tt.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Ok(Tensor::scalar(total / n))
            }
            Op::CrossEntropy(p, t) => {
                let (tp, tt) = (self.val(*p), self.val(*t));
                if tp.shape() != tt.shape() {
                    return Err(self.mismatch(id, format!("cross entropy {:?} vs {:?}", tp.shape(), tt.shape())));
                }
                if let Some(&bad) = tp.data().iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
                    return Err(GraphError::InvalidProbability {
                        node: self.describe(*p),
                        value: bad,
                    });
                }
                let n = tp.rows() as f64;
                let total: f64 = tp
                    .data()
                    .iter()
                    .zip(tt.data())
                    .map(|(&q, &y)| if y == 0.0 { 0.0 } else { -y * q.max(PROB_FLOOR).ln() })
                    .sum();
                Ok(Tensor::scalar(total / n))
            }
            Op::Toeplitz {
                kernels,
                signal_len,
            } => {
                let k = self.val(*kernels);
                if k.rank() != 2 || k.shape()[1] > *signal_len {
                    return Err(self.mismatch(id, format!("kernels {:?} for length {signal_len}", k.shape())));
                }
                Ok(toeplitz_matrix(k, *signal_len))
            }
            Op::ShiftRows(a, shift) => {
                let t = self.val(*a);
                if t.rank() != 2 {
                    return Err(self.mismatch(id, format!("shift_rows of {:?}", t.shape())));
                }
                Ok(shift_rows(t, *shift))
            }
            Op::RowMatVec(mats, a) => {
                let t = self.val(*a);
                if t.rank() != 2 || mats.len() != t.rows() {
                    return Err(self.mismatch(
                        id,
                        format!("{} matrices for input {:?}", mats.len(), t.shape()),
                    ));
                }
                let d_in = t.cols();
                let d_out = mats[0].rows();
                let mut data = Vec::with_capacity(t.rows() * d_out);
                for (m, row) in mats.iter().zip(t.data().chunks(d_in)) {
                    if m.rank() != 2 || m.cols() != d_in || m.rows() != d_out {
                        return Err(self.mismatch(id, format!("row matrix {:?}", m.shape())));
                    }
                    data.extend(matmul_raw(m.data(), row, d_out, d_in, 1));
                }
                Tensor::new(vec![t.rows(), d_out], data)
            }
        }
    }

    fn broadcast(
        &self,
        id: NodeId,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, GraphError> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape() == tb.shape() {
            Ok(ta.zip_map(tb, f))
        } else if tb.is_scalar_like() && (!ta.is_scalar_like() || ta.rank() >= tb.rank()) {
            let s = tb.item();
            Ok(ta.map(|v| f(v, s)))
        } else if ta.is_scalar_like() {
            let s = ta.item();
            Ok(tb.map(|v| f(s, v)))
        } else {
            Err(self.mismatch(id, format!("{:?} vs {:?}", ta.shape(), tb.shape())))
        }
    }

    fn concat_forward(&self, id: NodeId, parts: &[NodeId]) -> Result<Tensor, GraphError> {
        let first = self.val(parts[0]);
        let rank = first.rank();
        if rank == 0 || rank > 2 {
            return Err(self.mismatch(id, format!("concat of {:?}", first.shape())));
        }
        let rows = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.val(p);
            if t.rank() != rank || t.rows() != rows {
                return Err(self.mismatch(id, format!("concat {:?} with {:?}", first.shape(), t.shape())));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.val(p).data()[r * w..(r + 1) * w]);
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        Tensor::new(shape, data)
    }

    /// Gradients of the last evaluated root with respect to every parameter.
    /// Parameters that do not influence the root get zero gradients.
    pub fn backward(&self) -> Result<BTreeMap<String, Tensor>, GraphError> {
        let root = self.last_root.ok_or_else(|| {
            GraphError::NotEvaluated("root (call eval before backward)".to_string())
        })?;
        let root_val = self.value(root)?;
        if root_val.len() != 1 {
            return Err(GraphError::NonScalarRoot {
                node: self.describe(root),
                shape: root_val.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_val.shape(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.local_grads(NodeId(i), &g);
            for (p, pg) in contributions {
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[i] = Some(g);
        }
        let mut out = BTreeMap::new();
        for (name, value) in &self.params {
            let node = self.param_nodes[name];
            let g = grads
                .get(node.0)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| Tensor::zeros(value.shape()));
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Vector-Jacobian products of node `id` towards each parent.
    fn local_grads(&self, id: NodeId, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let node = &self.nodes[id.0];
        let out = node.value.as_ref().expect("evaluated");
        match &node.op {
            Op::Input(_) | Op::Param(_) | Op::Const(_) => Vec::new(),
            Op::Add(a, b) => {
                vec![(*a, reduce_like(g, self.val(*a))), (*b, reduce_like(g, self.val(*b)))]
            }
            Op::Sub(a, b) => {
                let neg = g.map(|v| -v);
                vec![(*a, reduce_like(g, self.val(*a))), (*b, reduce_like(&neg, self.val(*b)))]
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let ga = reduce_like(&times_broadcast(g, tb), ta);
                let gb = reduce_like(&times_broadcast(g, ta), tb);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|v| v * f))],
            Op::Offset(a, _) => vec![(*a, g.clone())],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k, n, _) = matmul_dims(ta, tb).expect("validated in forward");
                let ga = matmul_nt_raw(g.data(), tb.data(), m, n, k);
                let gb = matmul_tn_raw(ta.data(), g.data(), m, k, n);
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga).expect("shape")),
                    (*b, Tensor::new(tb.shape().to_vec(), gb).expect("shape")),
                ]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Reshape(a, _) => {
                let shape = self.val(*a).shape().to_vec();
                vec![(*a, g.clone().reshaped(shape).expect("same size"))]
            }
            Op::AddRow(a, b) => {
                let cols = g.cols();
                let mut gb = vec![0.0; cols];
                for row in g.data().chunks(cols) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let bshape = self.val(*b).shape().to_vec();
                vec![(*a, g.clone()), (*b, Tensor::new(bshape, gb).expect("shape"))]
            }
            Op::Concat(parts) => {
                let total = g.cols();
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let t = self.val(p);
                    let w = t.cols();
                    let mut data = Vec::with_capacity(t.len());
                    for row in g.data().chunks(total) {
                        data.extend_from_slice(&row[offset..offset + w]);
                    }
                    res.push((p, Tensor::new(t.shape().to_vec(), data).expect("shape")));
                    offset += w;
                }
                res
            }
            Op::SliceCols(a, start, len) => {
                let t = self.val(*a);
                let cols = t.cols();
                let mut ga = Tensor::zeros(t.shape());
                for (dst, src) in ga.data_mut().chunks_mut(cols).zip(g.data().chunks(*len)) {
                    dst[*start..start + len].copy_from_slice(src);
                }
                vec![(*a, ga)]
            }
            Op::Act(a, kind) => {
                let x = self.val(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                    .collect();
                vec![(*a, Tensor::new(x.shape().to_vec(), data).expect("shape"))]
            }
            Op::ShrinkBy(x, b) => {
                let (tx, tb) = (self.val(*x), self.val(*b));
                let idx = threshold_index(tx, tb).expect("validated in forward");
                let mut gx = Tensor::zeros(tx.shape());
                let mut gb = Tensor::zeros(tb.shape());
                for (i, &v) in tx.data().iter().enumerate() {
                    let j = idx(i);
                    if v.abs() > tb.data()[j] {
                        gx.data_mut()[i] = g.data()[i];
                        gb.data_mut()[j] -= v.signum() * g.data()[i];
                    }
                }
                vec![(*x, gx), (*b, gb)]
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                let mut ga = out.clone();
                for ((y, gy), dst) in out
                    .data()
                    .chunks(cols)
                    .zip(g.data().chunks(cols))
                    .zip(ga.data_mut().chunks_mut(cols))
                {
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for ((d, &yi), &gi) in dst.iter_mut().zip(y).zip(gy) {
                        *d = yi * (gi - dot);
                    }
                }
                vec![(*a, ga)]
            }
            Op::Sum(a) => {
                let s = g.item();
                vec![(*a, Tensor::full(self.val(*a).shape(), s))]
            }
            Op::Mean(a) => {
                let t = self.val(*a);
                let s = g.item() / t.len() as f64;
                vec![(*a, Tensor::full(t.shape(), s))]
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (self.val(*p), self.val(*t));
                let c = 2.0 * g.item() / batch_count(tp) as f64;
                let gp = tp.zip_map(tt, |a, b| c * (a - b));
                let gt = gp.map(|v| -v);
                vec![(*p, gp), (*t, gt)]
            }
            Op::CrossEntropy(p, t) => {
                let (tp, tt) = (self.val(*p), self.val(*t));
                let c = g.item() / tp.rows() as f64;
                let gp = tp.zip_map(tt, |q, y| if q > PROB_FLOOR { -c * y / q } else { 0.0 });
                let gt = tp.map(|q| -c * q.max(PROB_FLOOR).ln());
                vec![(*p, gp), (*t, gt)]
            }
            Op::Toeplitz { kernels, .. } => {
                let k = self.val(*kernels);
                let (channels, klen) = (k.shape()[0], k.shape()[1]);
                let n = g.rows();
                let m = n - klen + 1;
                let cols = g.cols();
                let mut gk = vec![0.0; channels * klen];
                for c in 0..channels {
                    for j in 0..klen {
                        let mut acc = 0.0;
                        for s in 0..m {
                            acc += g.data()[(s + j) * cols + c * m + s];
                        }
                        gk[c * klen + j] = acc;
                    }
                }
                vec![(*kernels, Tensor::new(k.shape().to_vec(), gk).expect("shape"))]
            }
            Op::ShiftRows(a, shift) => vec![(*a, shift_rows(g, -shift))],
            Op::RowMatVec(mats, a) => {
                let t = self.val(*a);
                let d_in = t.cols();
                let d_out = g.cols();
                let mut data = Vec::with_capacity(t.len());
                for (m, row) in mats.iter().zip(g.data().chunks(d_out)) {
                    data.extend(matmul_tn_raw(m.data(), row, d_out, d_in, 1));
                }
                vec![(*a, Tensor::new(t.shape().to_vec(), data).expect("shape"))]
            }
        }
    }
}

fn batch_count(t: &Tensor) -> usize {
    match t.rank() {
        0 => 1,
        1 => t.len(),
        _ => t.shape()[0],
    }
}

/// Dimensions `(m, k, n)` and result shape for a supported matmul.
fn matmul_dims(a: &Tensor, b: &Tensor) -> Option<(usize, usize, usize, Vec<usize>)> {
    match (a.shape(), b.shape()) {
        ([m, k], [k2, n]) if k == k2 => Some((*m, *k, *n, vec![*m, *n])),
        ([m, k], [k2]) if k == k2 => Some((*m, *k, 1, vec![*m])),
        ([k], [k2, n]) if k == k2 => Some((1, *k, *n, vec![*n])),
        _ => None,
    }
}

/// Maps an element index of `x` onto the threshold element it uses.
fn threshold_index(x: &Tensor, b: &Tensor) -> Option<Box<dyn Fn(usize) -> usize>> {
    if b.len() == 1 {
        Some(Box::new(|_| 0))
    } else if b.shape() == x.shape() {
        Some(Box::new(|i| i))
    } else if x.rank() == 2 && b.rank() == 1 && b.len() == x.cols() {
        let cols = x.cols();
        Some(Box::new(move |i| i % cols))
    } else {
        None
    }
}

/// Sums a broadcast gradient back onto the shape of `like`.
fn reduce_like(g: &Tensor, like: &Tensor) -> Tensor {
    if g.shape() == like.shape() {
        g.clone()
    } else {
        Tensor::full(like.shape(), g.sum())
    }
}

/// `g * other` where `other` is either the same shape or one element.
fn times_broadcast(g: &Tensor, other: &Tensor) -> Tensor {
    if other.shape() == g.shape() {
        g.zip_map(other, |a, b| a * b)
    } else {
        let s = other.item();
        g.map(|v| v * s)
    }
}

fn shift_rows(t: &Tensor, shift: isize) -> Tensor {
    let (rows, cols) = (t.rows() as isize, t.cols());
    let mut out = Tensor::zeros(t.shape());
    for r in 0..rows {
        let src = r - shift;
        if (0..rows).contains(&src) {
            let (r, src) = (r as usize, src as usize);
            out.data_mut()[r * cols..(r + 1) * cols]
                .copy_from_slice(&t.data()[src * cols..(src + 1) * cols]);
        }
    }
    out
}

/// Builds the `[n, C·M]` block-Toeplitz matrix of a `[C, L]` kernel bank,
/// `M = n - L + 1`: column `c·M + s` holds kernel `c` shifted down by `s`.
pub fn toeplitz_matrix(kernels: &Tensor, n: usize) -> Tensor {
    let (channels, klen) = (kernels.shape()[0], kernels.shape()[1]);
    let m = n - klen + 1;
    let cols = channels * m;
    let mut data = vec![0.0; n * cols];
    for c in 0..channels {
        let kern = &kernels.data()[c * klen..(c + 1) * klen];
        for s in 0..m {
            for (j, &kv) in kern.iter().enumerate() {
                data[(s + j) * cols + c * m + s] = kv;
            }
        }
    }
    Tensor::matrix(n, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(2));
        let v = g.input("v");
        g.matmul(i, v);
        let y = g.eval(&bindings([("v", Tensor::vector(vec![1.0, 2.0]))])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_node() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.relu(x);
        let y = g.eval(&bindings([("x", Tensor::vector(vec![-1.0, 3.0]))])).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0]);
    }

    #[test]
    fn affine_chain() {
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]));
        let s = g.input("s");
        let b = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let hs = g.matmul(h, s);
        g.add(hs, b);
        let y = g.eval(&bindings([("s", Tensor::vector(vec![1.0, -1.0]))])).unwrap();
        assert_eq!(y.data(), &[3.0, -1.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let t = g.param("theta", Tensor::scalar(3.0));
        g.mul(t, t);
        g.eval(&Bindings::new()).unwrap();
        let grads = g.backward().unwrap();
        assert_eq!(grads["theta"].item(), 6.0);
    }

    #[test]
    fn mse_gradient() {
        let mut g = Graph::new();
        let t = g.param("theta", Tensor::scalar(1.0));
        let x = g.input("x");
        let y = g.input("y");
        let pred = g.mul(t, x);
        g.mse(pred, y);
        let loss = g
            .eval(&bindings([("x", Tensor::scalar(2.0)), ("y", Tensor::scalar(0.0))]))
            .unwrap();
        assert_eq!(loss.item(), 4.0);
        assert_eq!(g.backward().unwrap()["theta"].item(), 8.0);
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let m = g.matmul(a, b);
        g.label(m, "bad product");
        let err = g
            .eval(&bindings([
                ("a", Tensor::matrix(2, 3, vec![0.0; 6])),
                ("b", Tensor::matrix(2, 3, vec![0.0; 6])),
            ]))
            .unwrap_err();
        match err {
            GraphError::ShapeMismatch { node, .. } => assert!(node.contains("bad product")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.act(x, Activation::Exp);
        let err = g.eval(&bindings([("x", Tensor::scalar(1e6))])).unwrap_err();
        assert!(matches!(err, GraphError::NonFinite(ref n) if n.contains("activation")));
    }

    #[test]
    fn backward_needs_scalar_root() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::vector(vec![1.0, 2.0]));
        g.scale(p, 2.0);
        g.eval(&Bindings::new()).unwrap();
        assert!(matches!(g.backward(), Err(GraphError::NonScalarRoot { .. })));
    }

    #[test]
    fn unbound_input_fails() {
        let mut g = Graph::new();
        g.input("x");
        assert!(matches!(g.eval(&Bindings::new()), Err(GraphError::UnboundInput(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        // f = p*p + 3p at p = 2: gradient 2p + 3 = 7.
        let mut g = Graph::new();
        let p = g.param("p", Tensor::scalar(2.0));
        let sq = g.mul(p, p);
        let lin = g.scale(p, 3.0);
        g.add(sq, lin);
        g.eval(&Bindings::new()).unwrap();
        assert_eq!(g.backward().unwrap()["p"].item(), 7.0);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let p = g.param("p", Tensor::scalar(2.0));
        g.param("unused", Tensor::vector(vec![1.0, 1.0]));
        g.mul(p, p);
        g.eval(&Bindings::new()).unwrap();
        let grads = g.backward().unwrap();
        assert_eq!(grads["unused"].data(), &[0.0, 0.0]);
    }

    #[test]
    fn toeplitz_layout() {
        let k = Tensor::matrix(1, 2, vec![1.0, 2.0]);
        let h = toeplitz_matrix(&k, 3);
        assert_eq!(h.shape(), &[3, 2]);
        assert!(close(h.data(), &[1.0, 0.0, 2.0, 1.0, 0.0, 2.0]));
    }

    #[test]
    fn shift_rows_pads_with_zero() {
        let t = Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]);
        assert_eq!(shift_rows(&t, 1).data(), &[0.0, 1.0, 2.0]);
        assert_eq!(shift_rows(&t, -1).data(), &[2.0, 3.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_invert() {
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let c = g.concat(&[a, b]);
        g.slice_cols(c, 2, 1);
        let y = g
            .eval(&bindings([
                ("a", Tensor::matrix(2, 2, vec![1., 2., 3., 4.])),
                ("b", Tensor::matrix(2, 1, vec![5., 6.])),
            ]))
            .unwrap();
        assert_eq!(y.data(), &[5.0, 6.0]);
    }
}
