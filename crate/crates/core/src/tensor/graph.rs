//! Reverse-mode autodiff over tensor-valued nodes.
//!
//! Values are computed eagerly when a node is appended. `backward` emits the
//! gradient computation as ordinary nodes of the same graph, so a gradient can
//! itself be differentiated (needed for gradient penalties).

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::kernels::{self, ConvGeom};
use crate::tensor::value::{numel, Tensor};

/// Slope of the negative branch of every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Conv2d {
        x: NodeId,
        k: NodeId,
        geom: ConvGeom,
    },
    ConvInputGrad {
        g: NodeId,
        k: NodeId,
        geom: ConvGeom,
        in_hw: (usize, usize),
    },
    ConvWeightGrad {
        x: NodeId,
        g: NodeId,
        geom: ConvGeom,
        kernel_hw: (usize, usize),
        per_sample: bool,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Square(NodeId),
    Sqrt(NodeId),
    Recip(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    LeakyRelu(NodeId),
    /// Derivative of leaky ReLU; piecewise constant, so it has no gradient.
    LeakyMask(NodeId),
    Reshape(NodeId, Vec<usize>),
    BroadcastTo(NodeId, Vec<usize>),
    SumTo(NodeId, Vec<usize>),
    Upsample2x(NodeId),
    SumPool2x(NodeId),
    Concat(Vec<NodeId>, usize),
    Slice {
        a: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    },
    Embed {
        a: NodeId,
        axis: usize,
        start: usize,
        full: usize,
    },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Mul(a, b) | Div(a, b) => vec![*a, *b],
            Conv2d { x, k, .. } => vec![*x, *k],
            ConvInputGrad { g, k, .. } => vec![*g, *k],
            ConvWeightGrad { x, g, .. } => vec![*x, *g],
            Transpose(a)
            | Scale(a, _)
            | AddScalar(a, _)
            | Square(a)
            | Sqrt(a)
            | Recip(a)
            | Softplus(a)
            | Sigmoid(a)
            | LeakyRelu(a)
            | Reshape(a, _)
            | BroadcastTo(a, _)
            | SumTo(a, _)
            | Upsample2x(a)
            | SumPool2x(a) => vec![*a],
            LeakyMask(_) => vec![],
            Concat(parts, _) => parts.clone(),
            Slice { a, .. } | Embed { a, .. } => vec![*a],
        }
    }
}

struct Node {
    op: Op,
    value: Rc<Tensor>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn compute(op: &Op, nodes: &[Node]) -> Result<Tensor> {
    let v = |id: &NodeId| -> &Tensor { &nodes[id.0].value };
    use Op::*;
    Ok(match op {
        Leaf => unreachable!("leaves carry their own values"),
        MatMul(a, b) => kernels::matmul(v(a), v(b))?,
        Transpose(a) => kernels::transpose2d(v(a))?,
        Conv2d { x, k, geom } => kernels::conv2d(v(x), v(k), *geom)?,
        ConvInputGrad { g, k, geom, in_hw } => kernels::conv2d_input_grad(v(g), v(k), *geom, *in_hw)?,
        ConvWeightGrad {
            x,
            g,
            geom,
            kernel_hw,
            per_sample,
        } => kernels::conv2d_weight_grad(v(x), v(g), *geom, *kernel_hw, *per_sample)?,
        Add(a, b) => kernels::broadcast_binary("add", v(a), v(b), |p, q| p + q)?,
        Mul(a, b) => kernels::broadcast_binary("mul", v(a), v(b), |p, q| p * q)?,
        Div(a, b) => kernels::broadcast_binary("div", v(a), v(b), |p, q| p / q)?,
        Scale(a, c) => v(a).map(|p| p * c),
        AddScalar(a, c) => v(a).map(|p| p + c),
        Square(a) => v(a).map(|p| p * p),
        Sqrt(a) => v(a).map(f64::sqrt),
        Recip(a) => v(a).map(|p| 1.0 / p),
        Softplus(a) => v(a).map(softplus),
        Sigmoid(a) => v(a).map(sigmoid),
        LeakyRelu(a) => v(a).map(|p| if p >= 0.0 { p } else { LEAKY_SLOPE * p }),
        LeakyMask(a) => v(a).map(|p| if p >= 0.0 { 1.0 } else { LEAKY_SLOPE }),
        Reshape(a, shape) => v(a)
            .reshape(shape)
            .map_err(|_| Error::shape("reshape", v(a).shape(), shape))?,
        BroadcastTo(a, shape) => kernels::broadcast_to(v(a), shape)?,
        SumTo(a, shape) => kernels::sum_to(v(a), shape)?,
        Upsample2x(a) => kernels::upsample2x(v(a))?,
        SumPool2x(a) => kernels::sum_pool2x(v(a))?,
        Concat(parts, axis) => {
            let ts: Vec<&Tensor> = parts.iter().map(v).collect();
            kernels::concat(&ts, *axis)?
        }
        Slice { a, axis, start, len } => kernels::slice(v(a), *axis, *start, *len)?,
        Embed { a, axis, start, full } => kernels::embed(v(a), *axis, *start, *full)?,
    })
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

    fn push(&mut self, op: Op) -> Result<NodeId> {
        for input in op.inputs() {
            self.check(input)?;
        }
        let value = Rc::new(compute(&op, &self.nodes)?);
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    /// Adds an input or parameter node.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.leaf_rc(Rc::new(value))
    }

    pub fn leaf_rc(&mut self, value: Rc<Tensor>) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf holding the current value of `id`; gradients stop here.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id.0].value.clone();
        self.leaf_rc(v)
    }

    /// Forward value of a node.
    pub fn evaluate(&self, id: NodeId) -> Result<&Tensor> {
        self.check(id)?;
        Ok(&self.nodes[id.0].value)
    }

    /// Forward value of a node known to belong to this graph.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Replaces a leaf's value. Call [`Graph::recompute`] to propagate.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        self.check(id)?;
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::NotALeaf(id.0));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::shape("set_leaf", node.value.shape(), value.shape()));
        }
        node.value = Rc::new(value);
        Ok(())
    }

    /// Re-runs every non-leaf node in creation order against current leaf values.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            rest[0].value = Rc::new(compute(&rest[0].op, before)?);
        }
        Ok(())
    }

    /// Non-leaf nodes up to `until` that depend on `leaf`, in creation order.
    pub(crate) fn dependents(&self, leaf: NodeId, until: NodeId) -> Vec<usize> {
        let mut reached = vec![false; until.0 + 1];
        let mut out = Vec::new();
        if leaf.0 > until.0 {
            return out;
        }
        reached[leaf.0] = true;
        for i in leaf.0 + 1..=until.0 {
            if self.nodes[i].op.inputs().iter().any(|j| reached[j.0]) {
                reached[i] = true;
                out.push(i);
            }
        }
        out
    }

    /// Hash of the activation pattern (sign of every leaky-ReLU input) among
    /// `nodes`. Equal hashes mean no listed unit switched branch.
    pub(crate) fn kink_pattern(&self, nodes: &[usize]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &i in nodes {
            if let Op::LeakyRelu(a) | Op::LeakyMask(a) = self.nodes[i].op {
                for &v in self.nodes[a.0].value.data() {
                    h ^= u64::from(v >= 0.0);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Re-runs the listed nodes, which must be in creation order.
    pub(crate) fn recompute_nodes(&mut self, nodes: &[usize]) -> Result<()> {
        for &i in nodes {
            let (before, rest) = self.nodes.split_at_mut(i);
            rest[0].value = Rc::new(compute(&rest[0].op, before)?);
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    /// 2-D convolution of `[B,C,H,W]` with `[O,C,kh,kw]` or a per-sample
    /// `[B,O,C,kh,kw]` kernel.
    pub fn conv2d(&mut self, x: NodeId, k: NodeId, geom: ConvGeom) -> Result<NodeId> {
        self.push(Op::Conv2d { x, k, geom })
    }

    pub fn conv2d_input_grad(&mut self, g: NodeId, k: NodeId, geom: ConvGeom, in_hw: (usize, usize)) -> Result<NodeId> {
        self.push(Op::ConvInputGrad { g, k, geom, in_hw })
    }

    pub fn conv2d_weight_grad(
        &mut self,
        x: NodeId,
        g: NodeId,
        geom: ConvGeom,
        kernel_hw: (usize, usize),
        per_sample: bool,
    ) -> Result<NodeId> {
        self.push(Op::ConvWeightGrad {
            x,
            g,
            geom,
            kernel_hw,
            per_sample,
        })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Div(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(a, c))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Recip(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::LeakyRelu(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        if self.shape(a) == shape {
            return Ok(a);
        }
        self.push(Op::Reshape(a, shape.to_vec()))
    }

    pub fn broadcast_to(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::BroadcastTo(a, shape.to_vec()))
    }

    /// Sums broadcast axes away so the result has `shape`.
    pub fn sum_to(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        if self.shape(a) == shape {
            return Ok(a);
        }
        self.push(Op::SumTo(a, shape.to_vec()))
    }

    pub fn upsample2x(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Upsample2x(a))
    }

    pub fn sum_pool2x(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumPool2x(a))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero nodes".into()));
        }
        self.push(Op::Concat(parts.to_vec(), axis))
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::Slice { a, axis, start, len })
    }

    /// Places `a` at `start` along `axis` inside zeros of extent `full`.
    pub fn embed(&mut self, a: NodeId, axis: usize, start: usize, full: usize) -> Result<NodeId> {
        self.push(Op::Embed { a, axis, start, full })
    }

    /// Sum over `axes`, dropping them (a full reduction yields shape `[1]`).
    pub fn reduce_sum(&mut self, a: NodeId, axes: &[usize]) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        if axes.iter().any(|&ax| ax >= shape.len()) {
            return Err(Error::shape("reduce_sum", &shape, axes));
        }
        let keep: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
            .collect();
        let mut dropped: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect();
        if dropped.is_empty() {
            dropped.push(1);
        }
        let s = self.sum_to(a, &keep)?;
        self.reshape(s, &dropped)
    }

    pub fn reduce_mean(&mut self, a: NodeId, axes: &[usize]) -> Result<NodeId> {
        let count: usize = axes
            .iter()
            .map(|&ax| self.shape(a).get(ax).copied().unwrap_or(1))
            .product();
        let s = self.reduce_sum(a, axes)?;
        self.scale(s, 1.0 / count as f64)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.reduce_sum(a, &axes)
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Gradients of the scalar `y` with respect to each of `wrt`, returned as
    /// nodes of this graph. Inputs that `y` does not depend on get zeros.
    pub fn backward(&mut self, y: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        self.check(y)?;
        if numel(self.shape(y)) != 1 {
            return Err(Error::NonScalar(self.shape(y).to_vec()));
        }
        for &w in wrt {
            self.check(w)?;
        }
        let n = y.0 + 1;
        let mut needs = vec![false; n];
        for &w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        for i in 0..n {
            if !needs[i] {
                needs[i] = self.nodes[i].op.inputs().iter().any(|j| needs[j.0]);
            }
        }

        let mut grads: Vec<Option<NodeId>> = vec![None; n];
        let seed_shape = self.shape(y).to_vec();
        grads[y.0] = Some(self.leaf(Tensor::ones(&seed_shape)));
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, gi) in self.vjp(NodeId(i), &op, g, &needs)? {
                grads[input.0] = Some(match grads[input.0] {
                    None => gi,
                    Some(prev) => self.add(prev, gi)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(w).to_vec();
                    self.leaf(Tensor::zeros(&shape))
                }
            })
            .collect())
    }

    /// Vector-Jacobian products of one node, restricted to inputs on a
    /// path to a differentiation target.
    fn vjp(&mut self, out: NodeId, op: &Op, g: NodeId, needs: &[bool]) -> Result<Vec<(NodeId, NodeId)>> {
        let want = |id: &NodeId| needs[id.0];
        let mut res = Vec::new();
        use Op::*;
        match *op {
            Leaf | LeakyMask(_) => {}
            MatMul(a, b) => {
                if want(&a) {
                    let bt = self.transpose(b)?;
                    res.push((a, self.matmul(g, bt)?));
                }
                if want(&b) {
                    let at = self.transpose(a)?;
                    res.push((b, self.matmul(at, g)?));
                }
            }
            Transpose(a) => res.push((a, self.transpose(g)?)),
            Conv2d { x, k, geom } => {
                if want(&x) {
                    let s = self.shape(x);
                    let in_hw = (s[2], s[3]);
                    res.push((x, self.conv2d_input_grad(g, k, geom, in_hw)?));
                }
                if want(&k) {
                    let ks = self.shape(k).to_vec();
                    let khw = (ks[ks.len() - 2], ks[ks.len() - 1]);
                    res.push((k, self.conv2d_weight_grad(x, g, geom, khw, ks.len() == 5)?));
                }
            }
            ConvInputGrad { g: gin, k, geom, .. } => {
                if want(&gin) {
                    res.push((gin, self.conv2d(g, k, geom)?));
                }
                if want(&k) {
                    let ks = self.shape(k).to_vec();
                    let khw = (ks[ks.len() - 2], ks[ks.len() - 1]);
                    res.push((k, self.conv2d_weight_grad(g, gin, geom, khw, ks.len() == 5)?));
                }
            }
            ConvWeightGrad { x, g: gin, geom, .. } => {
                if want(&x) {
                    let s = self.shape(x);
                    let in_hw = (s[2], s[3]);
                    res.push((x, self.conv2d_input_grad(gin, g, geom, in_hw)?));
                }
                if want(&gin) {
                    res.push((gin, self.conv2d(x, g, geom)?));
                }
            }
            Add(a, b) => {
                for p in [a, b] {
                    if want(&p) {
                        let shape = self.shape(p).to_vec();
                        res.push((p, self.sum_to(g, &shape)?));
                    }
                }
            }
            Mul(a, b) => {
                for (p, other) in [(a, b), (b, a)] {
                    if want(&p) {
                        let prod = self.mul(g, other)?;
                        let shape = self.shape(p).to_vec();
                        res.push((p, self.sum_to(prod, &shape)?));
                    }
                }
            }
            Div(a, b) => {
                if want(&a) {
                    let q = self.div(g, b)?;
                    let shape = self.shape(a).to_vec();
                    res.push((a, self.sum_to(q, &shape)?));
                }
                if want(&b) {
                    let y_over_b = self.div(out, b)?;
                    let prod = self.mul(g, y_over_b)?;
                    let neg = self.scale(prod, -1.0)?;
                    let shape = self.shape(b).to_vec();
                    res.push((b, self.sum_to(neg, &shape)?));
                }
            }
            Scale(a, c) => res.push((a, self.scale(g, c)?)),
            AddScalar(a, _) => res.push((a, g)),
            Square(a) => {
                let two_a = self.scale(a, 2.0)?;
                res.push((a, self.mul(g, two_a)?));
            }
            Sqrt(a) => {
                let r = self.recip(out)?;
                let half_r = self.scale(r, 0.5)?;
                res.push((a, self.mul(g, half_r)?));
            }
            Recip(a) => {
                let sq = self.square(out)?;
                let neg = self.scale(sq, -1.0)?;
                res.push((a, self.mul(g, neg)?));
            }
            Softplus(a) => {
                let s = self.sigmoid(a)?;
                res.push((a, self.mul(g, s)?));
            }
            Sigmoid(a) => {
                let neg = self.scale(out, -1.0)?;
                let one_minus = self.add_scalar(neg, 1.0)?;
                let d = self.mul(out, one_minus)?;
                res.push((a, self.mul(g, d)?));
            }
            LeakyRelu(a) => {
                let mask = self.push(LeakyMask(a))?;
                res.push((a, self.mul(g, mask)?));
            }
            Reshape(a, _) => {
                let shape = self.shape(a).to_vec();
                res.push((a, self.reshape(g, &shape)?));
            }
            BroadcastTo(a, _) => {
                let shape = self.shape(a).to_vec();
                res.push((a, self.sum_to(g, &shape)?));
            }
            SumTo(a, _) => {
                let shape = self.shape(a).to_vec();
                res.push((a, self.broadcast_to(g, &shape)?));
            }
            Upsample2x(a) => res.push((a, self.sum_pool2x(g)?)),
            SumPool2x(a) => res.push((a, self.upsample2x(g)?)),
            Concat(ref parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[axis];
                    if want(&p) {
                        res.push((p, self.slice(g, axis, offset, len)?));
                    }
                    offset += len;
                }
            }
            Slice { a, axis, start, .. } => {
                let full = self.shape(a)[axis];
                res.push((a, self.embed(g, axis, start, full)?));
            }
            Embed { a, axis, start, .. } => {
                let len = self.shape(a)[axis];
                res.push((a, self.slice(g, axis, start, len)?));
            }
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_slice(shape, data).unwrap()
    }

    #[test]
    fn identity_graph_returns_input() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 3.5]));
        assert_eq!(g.evaluate(x).unwrap().data(), &[1.0, -2.0, 3.5]);
    }

    #[test]
    fn matmul_by_identity() {
        let mut g = Graph::new();
        let i = g.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let a = g.leaf(t(&[2, 2], &[1.5, -2.0, 0.25, 4.0]));
        let y = g.matmul(i, a).unwrap();
        assert!(g.value(y).bit_eq(g.value(a)));
    }

    #[test]
    fn shape_error_names_op() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        assert!(err.to_string().contains("[2, 3]"), "{err}");
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let sq = g.square(x).unwrap();
        let y = g.sum_all(sq).unwrap();
        let dx = g.backward(y, &[x]).unwrap()[0];
        assert_eq!(g.value(dx).data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn second_derivative_of_cube() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let sq = g.square(x).unwrap();
        let cube = g.mul(sq, x).unwrap();
        let d1 = g.backward(cube, &[x]).unwrap()[0];
        assert!((g.value(d1).item() - 12.0).abs() < 1e-12);
        let d2 = g.backward(d1, &[x]).unwrap()[0];
        assert!((g.value(d2).item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_power_second_derivative() {
        let xs = [-1.5, -0.3, 0.7, 2.0];
        let mut g = Graph::new();
        let x = g.leaf(t(&[4], &xs));
        let sq = g.square(x).unwrap();
        let q = g.square(sq).unwrap();
        let y = g.sum_all(q).unwrap();
        let d1 = g.backward(y, &[x]).unwrap()[0];
        let s1 = g.sum_all(d1).unwrap();
        let d2 = g.backward(s1, &[x]).unwrap()[0];
        for (v, x) in g.value(d2).data().iter().zip(xs) {
            assert!((v - 12.0 * x * x).abs() < 1e-6);
        }
    }

    #[test]
    fn unused_input_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]));
        let unused = g.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let y = g.sum_all(x).unwrap();
        let grads = g.backward(y, &[x, unused]).unwrap();
        assert_eq!(g.value(grads[1]).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn division_gradients() {
        let a = Tensor::from_slice(&[2, 2], &[1.0, -2.0, 0.5, 3.0]).unwrap();
        let b = Tensor::from_slice(&[2], &[1.5, -0.7]).unwrap();
        let r = crate::tensor::check_gradients(&[a, b], 3, |g, x| g.div(x[0], x[1])).unwrap();
        assert!(r.max_relative_error <= 1e-5, "{r:?}");
    }

    #[test]
    fn non_scalar_source_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x, &[x]), Err(Error::NonScalar(_))));
    }

    #[test]
    fn recompute_after_rebinding() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        g.set_leaf(x, Tensor::scalar(-4.0)).unwrap();
        g.recompute().unwrap();
        assert_eq!(g.value(y).item(), 16.0);
        assert!(matches!(g.set_leaf(y, Tensor::scalar(0.0)), Err(Error::NotALeaf(_))));
    }

    #[test]
    fn evaluation_is_repeatable() {
        let build = || {
            let mut g = Graph::new();
            let x = g.leaf(t(&[4], &[0.1, -0.7, 1.3, 2.2]));
            let s = g.softplus(x).unwrap();
            let r = g.sqrt(s).unwrap();
            let y = g.sum_all(r).unwrap();
            g.value(y).clone()
        };
        assert!(build().bit_eq(&build()));
    }

    #[test]
    fn leaky_relu_at_zero_uses_positive_branch() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[0.0, -1.0]));
        let y = g.leaky_relu(x).unwrap();
        let s = g.sum_all(y).unwrap();
        let d = g.backward(s, &[x]).unwrap()[0];
        assert_eq!(g.value(d).data(), &[1.0, LEAKY_SLOPE]);
    }

    #[test]
    fn softplus_is_stable() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[-800.0, 0.0, 800.0]));
        let y = g.softplus(x).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(v[2], 800.0);
    }
}
