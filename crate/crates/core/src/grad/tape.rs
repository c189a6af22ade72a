//! Reverse-mode differentiation over a flat, append-only tape.
//!
//! Nodes are pushed in evaluation order, so every input id is smaller than
//! the id of the node that consumes it and the backward sweep is a single
//! reverse pass. The tape is meant to be rebuilt for each step.

use crate::error::{Error, Result};
use crate::grad::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sum(NodeId),
    WeightedSum(NodeId, Vec<f64>),
    /// Per-row cross-entropy; keeps the row softmax for the backward pass.
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// The computation record: nodes in topological order.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of leaf `id`; `None` when the root does not depend on it.
    /// Interior adjoints are released during the sweep.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.adjoints.get(id.0).and_then(Option::as_ref)
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that receives an adjoint.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Param, value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// Adds a length-`n` vector to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if av.shape().len() != 2 || bv.len() != av.shape()[1] {
            return Err(Error::Dimension {
                context: "row broadcast",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let n = bv.len();
        let mut out = av.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % n];
        }
        Ok(self.push(Op::AddRow(a, bias), out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).same_shape(self.value(b), "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).same_shape(self.value(b), "elementwise mul")?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let out = self.value(a).map(|v| v * factor);
        self.push(Op::Scale(a, factor), out)
    }

    /// ReLU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu(a), out)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), out)
    }

    /// `Σ_i w_i · a_i` with constant weights.
    pub fn weighted_sum(&mut self, a: NodeId, weights: &[f64]) -> Result<NodeId> {
        let av = self.value(a);
        if av.len() != weights.len() {
            return Err(Error::Dimension {
                context: "weighted sum",
                left: av.shape().to_vec(),
                right: vec![weights.len()],
            });
        }
        let total = av.data().iter().zip(weights).map(|(x, w)| x * w).sum();
        Ok(self.push(Op::WeightedSum(a, weights.to_vec()), Tensor::scalar(total)))
    }

    /// Per-example `−log softmax(logits_i)[label_i]`, stabilised by
    /// subtracting the row maximum.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "cross-entropy expects batch × classes logits, got {:?}",
                lv.shape()
            )));
        }
        let (batch, classes) = (lv.shape()[0], lv.shape()[1]);
        if batch == 0 {
            return Err(Error::Validation("cross-entropy on an empty batch".into()));
        }
        if labels.len() != batch {
            return Err(Error::Dimension {
                context: "cross-entropy labels",
                left: lv.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let mut probs = vec![0.0; batch * classes];
        let mut losses = Vec::with_capacity(batch);
        for (i, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::Validation(format!(
                    "label {label} out of range for {classes} classes"
                )));
            }
            let row = lv.row(i);
            let (arg, max) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
            // ln(1 + rest) keeps precision when one logit dominates
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != arg)
                .map(|(_, &v)| (v - max).exp())
                .sum();
            let denom = 1.0 + rest;
            let log_denom = rest.ln_1p();
            for (j, &v) in row.iter().enumerate() {
                probs[i * classes + j] = (v - max).exp() / denom;
            }
            // log-sum-exp minus the target logit; never negative up to rounding
            losses.push((log_denom - (row[label] - max)).max(0.0));
        }
        let probs = Tensor::matrix(batch, classes, probs)?;
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::vector(losses),
        ))
    }

    /// Exact reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(self.value(root).map(|_| 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param | Op::Constant => {
                    adj[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose()?)?;
                    let gb = self.value(*a).transpose()?.matmul(&g)?;
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let n = self.value(*bias).len();
                    let mut gb = vec![0.0; n];
                    for (i, v) in g.data().iter().enumerate() {
                        gb[i % n] += v;
                    }
                    let gb = Tensor::new(self.value(*bias).shape().to_vec(), gb)?;
                    accumulate(&mut adj, *bias, gb);
                    accumulate(&mut adj, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let mut ga = g.clone();
                    for (o, &v) in ga.data_mut().iter_mut().zip(self.value(*b).data()) {
                        *o *= v;
                    }
                    let mut gb = g;
                    for (o, &v) in gb.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *o *= v;
                    }
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut adj, *a, g.map(|v| v * f));
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    for (o, &x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if x <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    accumulate(&mut adj, *a, self.value(*a).map(|_| s));
                }
                Op::WeightedSum(a, w) => {
                    let s = g.data()[0];
                    let ga = Tensor::new(
                        self.value(*a).shape().to_vec(),
                        w.iter().map(|wi| wi * s).collect(),
                    )?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let classes = probs.cols();
                    let mut gl = probs.clone();
                    for (i, &label) in labels.iter().enumerate() {
                        let gi = g.data()[i];
                        let row = &mut gl.data_mut()[i * classes..(i + 1) * classes];
                        row[label] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= gi;
                        }
                    }
                    accumulate(&mut adj, *logits, gl);
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
