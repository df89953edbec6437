//! Append-only computation graph with reverse-mode gradients.
//!
//! Nodes are created through the operation methods on [`Graph`]; each
//! records its parents and a backward rule. Because nodes can only refer
//! to nodes created before them, index order is a topological order and
//! the backward pass is a single reverse sweep.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs has one element, applied to every lhs element
    Scalar,
    /// lhs is [m, n], rhs is [n], applied to every row
    Row,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId, Broadcast),
    Sub(NodeId, NodeId, Broadcast),
    Mul(NodeId, NodeId, Broadcast),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Log(NodeId, f64),
    Exp(NodeId),
    Square(NodeId),
    Recip(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Stack(Vec<NodeId>),
    Row(NodeId, usize),
    Index(NodeId, usize),
    Sum(NodeId),
    Mean(NodeId),
    Max(NodeId, usize),
    SumRows(NodeId),
    MaxRows(NodeId, Vec<usize>),
    Median(NodeId, Vec<(usize, f64)>),
    ScatterAdd(NodeId, Vec<usize>),
    Pad(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that reaches it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the node does not influence the root.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn get_or_zeros(&self, id: NodeId, len: usize) -> Vec<f64> {
        self.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
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

/// Softmax over each row; positions with `keep[i] == false` get exactly 0.
fn softmax_rows(x: &[f64], cols: usize, keep: Option<&[bool]>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row_in, row_out) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let kept = |i: usize| keep.map_or(true, |k| k[i]);
        let max = row_in
            .iter()
            .enumerate()
            .filter(|&(i, _)| kept(i))
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (i, (o, &v)) in row_out.iter_mut().zip(row_in).enumerate() {
            if kept(i) {
                *o = (v - max).exp();
                total += *o;
            }
        }
        for o in row_out.iter_mut() {
            *o /= total;
        }
    }
    out
}

/// Indices of the middle order statistic(s) with their subgradient
/// weights. Sorting is by (value, index) so ties go to the lower index.
pub(crate) fn median_selection(x: &[f64]) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let n = x.len();
    if n % 2 == 1 {
        vec![(order[n / 2], 1.0)]
    } else {
        vec![(order[n / 2 - 1], 0.5), (order[n / 2], 0.5)]
    }
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> NodeId {
        let value = Tensor::new(shape, data).expect("op produced an inconsistent shape");
        self.push(value, op)
    }

    /// Input or parameter node.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    fn broadcast(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Broadcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sb == [1] {
            Ok(Broadcast::Scalar)
        } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            Ok(Broadcast::Row)
        } else {
            Err(mismatch(op, sa, sb))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: fn(f64, f64) -> f64,
        make: fn(NodeId, NodeId, Broadcast) -> Op,
    ) -> Result<NodeId> {
        let bc = self.broadcast(name, a, b)?;
        let (xa, xb) = (self.data(a), self.data(b));
        let data: Vec<f64> = match bc {
            Broadcast::Same => xa.iter().zip(xb).map(|(&p, &q)| f(p, q)).collect(),
            Broadcast::Scalar => xa.iter().map(|&p| f(p, xb[0])).collect(),
            Broadcast::Row => {
                let n = xb.len();
                xa.iter().enumerate().map(|(i, &p)| f(p, xb[i % n])).collect()
            }
        };
        let shape = self.shape(a).to_vec();
        Ok(self.push_vec(shape, data, make(a, b, bc)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("add", a, b, |p, q| p + q, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |p, q| p - q, Op::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |p, q| p * q, Op::Mul)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.data(a).iter().map(|v| v * c).collect();
        let shape = self.shape(a).to_vec();
        self.push_vec(shape, data, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.data(a).iter().map(|v| v + c).collect();
        let shape = self.shape(a).to_vec();
        self.push_vec(shape, data, Op::AddConst(a))
    }

    /// `1 - x`
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let neg = self.scale(a, -1.0);
        self.add_const(neg, 1.0)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let data = self.data(a).iter().map(|&v| f(v)).collect();
        let shape = self.shape(a).to_vec();
        self.push_vec(shape, data, op)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Natural log of `max(x, floor)`; clamped entries pass no gradient.
    pub fn log_clamped(&mut self, a: NodeId, floor: f64) -> NodeId {
        self.unary(a, move |v| v.max(floor).ln(), Op::Log(a, floor))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |v| v * v, Op::Square(a))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |v| 1.0 / v, Op::Recip(a))
    }

    /// Softmax over the last axis with max-subtraction.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let cols = self.value(a).cols();
        let data = softmax_rows(self.data(a), cols, None);
        let shape = self.shape(a).to_vec();
        self.push_vec(shape, data, Op::Softmax(a))
    }

    /// Softmax over a vector where `keep[i] == false` behaves as a -inf logit.
    pub fn softmax_masked(&mut self, a: NodeId, keep: &[bool]) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 1 || keep.len() != shape[0] {
            return Err(mismatch("softmax_masked", &shape, &[keep.len()]));
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::InvalidShape {
                what: "softmax mask with no kept position",
                shape,
            });
        }
        let data = softmax_rows(self.data(a), shape[0], Some(keep));
        Ok(self.push_vec(shape, data, Op::Softmax(a)))
    }

    /// `[m, k] x [k] -> [m]`
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let (sm, sx) = (self.shape(m), self.shape(x));
        if sm.len() != 2 || sx.len() != 1 || sm[1] != sx[0] {
            return Err(mismatch("matvec", sm, sx));
        }
        let (rows, k) = (sm[0], sm[1]);
        let (dm, dx) = (self.data(m), self.data(x));
        let data: Vec<f64> = dm
            .chunks(k)
            .map(|row| row.iter().zip(dx).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push_vec(vec![rows], data, Op::MatVec(m, x)))
    }

    /// `[m] x [m, n] -> [n]`
    pub fn vecmat(&mut self, x: NodeId, m: NodeId) -> Result<NodeId> {
        let (sx, sm) = (self.shape(x), self.shape(m));
        if sm.len() != 2 || sx.len() != 1 || sm[0] != sx[0] {
            return Err(mismatch("vecmat", sx, sm));
        }
        let n = sm[1];
        let (dx, dm) = (self.data(x), self.data(m));
        let mut data = vec![0.0; n];
        for (xi, row) in dx.iter().zip(dm.chunks(n)) {
            for (o, r) in data.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
        Ok(self.push_vec(vec![n], data, Op::VecMat(x, m)))
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.data(a), self.data(b));
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let out = &mut data[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = da[i * k + p];
                for (o, bv) in out.iter_mut().zip(&db[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        Ok(self.push_vec(vec![m, n], data, Op::MatMul(a, b)))
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(mismatch("concat", self.shape(p), &[]));
            }
            data.extend_from_slice(self.data(p));
        }
        if data.is_empty() {
            return Err(Error::InvalidShape {
                what: "concat of nothing",
                shape: vec![0],
            });
        }
        Ok(self.push_vec(vec![data.len()], data, Op::Concat(parts.to_vec())))
    }

    /// `x[start..start + len]` of a vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let sx = self.shape(x);
        if sx.len() != 1 || len == 0 || start + len > sx[0] {
            return Err(mismatch("slice", sx, &[start, len]));
        }
        let data = self.data(x)[start..start + len].to_vec();
        Ok(self.push_vec(vec![len], data, Op::Slice(x, start)))
    }

    /// Stacks equal-length vectors into a `[k, n]` matrix.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        let first = *rows.first().ok_or(Error::InvalidShape {
            what: "stack of nothing",
            shape: vec![0],
        })?;
        let n = self.shape(first).to_vec();
        let mut data = Vec::with_capacity(rows.len() * n[0]);
        for &r in rows {
            if self.shape(r) != n.as_slice() || n.len() != 1 {
                return Err(mismatch("stack", &n, self.shape(r)));
            }
            data.extend_from_slice(self.data(r));
        }
        Ok(self.push_vec(vec![rows.len(), n[0]], data, Op::Stack(rows.to_vec())))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: NodeId, i: usize) -> Result<NodeId> {
        let sm = self.shape(m);
        if sm.len() != 2 || i >= sm[0] {
            return Err(mismatch("row", sm, &[i]));
        }
        let n = sm[1];
        let data = self.data(m)[i * n..(i + 1) * n].to_vec();
        Ok(self.push_vec(vec![n], data, Op::Row(m, i)))
    }

    /// Element `i` as a scalar.
    pub fn index(&mut self, x: NodeId, i: usize) -> Result<NodeId> {
        let d = self.data(x);
        if i >= d.len() {
            return Err(mismatch("index", self.shape(x), &[i]));
        }
        let v = d[i];
        Ok(self.push_vec(vec![1], vec![v], Op::Index(x, i)))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = self.data(x).iter().sum();
        self.push_vec(vec![1], vec![v], Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let d = self.data(x);
        let v = d.iter().sum::<f64>() / d.len() as f64;
        self.push_vec(vec![1], vec![v], Op::Mean(x))
    }

    /// Maximum over all elements; the gradient goes to the first maximizer.
    pub fn max(&mut self, x: NodeId) -> NodeId {
        let d = self.data(x);
        let mut arg = 0;
        for (i, &v) in d.iter().enumerate() {
            if v > d[arg] {
                arg = i;
            }
        }
        let v = d[arg];
        self.push_vec(vec![1], vec![v], Op::Max(x, arg))
    }

    /// Sum over the rows of `[m, n]`, giving `[n]`.
    pub fn sum_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(mismatch("sum_rows", &s, &[]));
        }
        let mut data = vec![0.0; s[1]];
        for row in self.data(x).chunks(s[1]) {
            for (o, v) in data.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(self.push_vec(vec![s[1]], data, Op::SumRows(x)))
    }

    /// Column-wise maximum of `[m, n]`, giving `[n]`; ties go to the lowest row.
    pub fn max_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(mismatch("max_rows", &s, &[]));
        }
        let (m, n) = (s[0], s[1]);
        let d = self.data(x);
        let mut arg = vec![0usize; n];
        for r in 1..m {
            for c in 0..n {
                if d[r * n + c] > d[arg[c] * n + c] {
                    arg[c] = r;
                }
            }
        }
        let data = (0..n).map(|c| d[arg[c] * n + c]).collect();
        Ok(self.push_vec(vec![n], data, Op::MaxRows(x, arg)))
    }

    /// Median of a vector. Even lengths average the two middle order
    /// statistics and split the gradient evenly between them.
    pub fn median(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).len() != 1 {
            return Err(mismatch("median", self.shape(x), &[]));
        }
        let d = self.data(x);
        let sel = median_selection(d);
        let v = sel.iter().map(|&(i, w)| w * d[i]).sum();
        Ok(self.push_vec(vec![1], vec![v], Op::Median(x, sel)))
    }

    /// `out[indices[i]] += x[i]` into a zero vector of length `out_len`.
    pub fn scatter_add(&mut self, x: NodeId, indices: &[usize], out_len: usize) -> Result<NodeId> {
        let d = self.data(x);
        if self.shape(x).len() != 1 || indices.len() != d.len() {
            return Err(mismatch("scatter_add", self.shape(x), &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= out_len) {
            return Err(mismatch("scatter_add", &[bad], &[out_len]));
        }
        let mut data = vec![0.0; out_len];
        for (&i, &v) in indices.iter().zip(d) {
            data[i] += v;
        }
        Ok(self.push_vec(vec![out_len], data, Op::ScatterAdd(x, indices.to_vec())))
    }

    /// Zero-extends a vector to `out_len`.
    pub fn pad(&mut self, x: NodeId, out_len: usize) -> Result<NodeId> {
        let d = self.data(x);
        if self.shape(x).len() != 1 || out_len < d.len() {
            return Err(mismatch("pad", self.shape(x), &[out_len]));
        }
        let mut data = d.to_vec();
        data.resize(out_len, 0.0);
        Ok(self.push_vec(vec![out_len], data, Op::Pad(x)))
    }

    /// Inner product of two equal-length vectors.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("dot", self.shape(a), self.shape(b)));
        }
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backward_node(node, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let len = self.nodes[id.0].value.len();
            let g = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
            f(g);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatVec(m, x) => {
                let (dm, dx) = (self.data(*m), self.data(*x));
                let k = dx.len();
                acc(*m, &mut |g| {
                    for (r, gyr) in gy.iter().enumerate() {
                        for (c, xv) in dx.iter().enumerate() {
                            g[r * k + c] += gyr * xv;
                        }
                    }
                });
                acc(*x, &mut |g| {
                    for (gyr, row) in gy.iter().zip(dm.chunks(k)) {
                        for (gc, mv) in g.iter_mut().zip(row) {
                            *gc += gyr * mv;
                        }
                    }
                });
            }
            Op::VecMat(x, m) => {
                let (dx, dm) = (self.data(*x), self.data(*m));
                let n = gy.len();
                acc(*x, &mut |g| {
                    for (gx, row) in g.iter_mut().zip(dm.chunks(n)) {
                        *gx += row.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
                acc(*m, &mut |g| {
                    for (r, xv) in dx.iter().enumerate() {
                        for (gm, gyc) in g[r * n..(r + 1) * n].iter_mut().zip(gy) {
                            *gm += xv * gyc;
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, &mut |g| {
                    for i in 0..m {
                        for p in 0..k {
                            g[i * k + p] += gy[i * n..(i + 1) * n]
                                .iter()
                                .zip(&db[p * n..(p + 1) * n])
                                .map(|(u, v)| u * v)
                                .sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |g| {
                    for i in 0..m {
                        for p in 0..k {
                            let aip = da[i * k + p];
                            for (gb, gyv) in g[p * n..(p + 1) * n].iter_mut().zip(&gy[i * n..(i + 1) * n]) {
                                *gb += aip * gyv;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, &mut |g| {
                    for (gv, d) in g.iter_mut().zip(gy) {
                        *gv += d;
                    }
                });
                let n = self.nodes[b.0].value.len();
                acc(*b, &mut |g| match bc {
                    Broadcast::Same => {
                        for (gv, d) in g.iter_mut().zip(gy) {
                            *gv += sign * d;
                        }
                    }
                    Broadcast::Scalar => g[0] += sign * gy.iter().sum::<f64>(),
                    Broadcast::Row => {
                        for (i, d) in gy.iter().enumerate() {
                            g[i % n] += sign * d;
                        }
                    }
                });
            }
            Op::Mul(a, b, bc) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let n = db.len();
                let bv = |i: usize| match bc {
                    Broadcast::Same => db[i],
                    Broadcast::Scalar => db[0],
                    Broadcast::Row => db[i % n],
                };
                acc(*a, &mut |g| {
                    for (i, (gv, d)) in g.iter_mut().zip(gy).enumerate() {
                        *gv += d * bv(i);
                    }
                });
                acc(*b, &mut |g| {
                    for (i, (d, av)) in gy.iter().zip(da).enumerate() {
                        let slot = match bc {
                            Broadcast::Same => i,
                            Broadcast::Scalar => 0,
                            Broadcast::Row => i % n,
                        };
                        g[slot] += d * av;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |g| {
                for (gv, d) in g.iter_mut().zip(gy) {
                    *gv += c * d;
                }
            }),
            Op::AddConst(a) => acc(*a, &mut |g| {
                for (gv, d) in g.iter_mut().zip(gy) {
                    *gv += d;
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |g| {
                for ((gv, d), yv) in g.iter_mut().zip(gy).zip(y) {
                    *gv += d * (1.0 - yv * yv);
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |g| {
                for ((gv, d), yv) in g.iter_mut().zip(gy).zip(y) {
                    *gv += d * yv * (1.0 - yv);
                }
            }),
            Op::Exp(a) => acc(*a, &mut |g| {
                for ((gv, d), yv) in g.iter_mut().zip(gy).zip(y) {
                    *gv += d * yv;
                }
            }),
            Op::Log(a, floor) => {
                let x = self.data(*a);
                acc(*a, &mut |g| {
                    for ((gv, d), xv) in g.iter_mut().zip(gy).zip(x) {
                        if *xv > *floor {
                            *gv += d / xv;
                        }
                    }
                })
            }
            Op::Square(a) => {
                let x = self.data(*a);
                acc(*a, &mut |g| {
                    for ((gv, d), xv) in g.iter_mut().zip(gy).zip(x) {
                        *gv += 2.0 * xv * d;
                    }
                })
            }
            Op::Recip(a) => acc(*a, &mut |g| {
                for ((gv, d), yv) in g.iter_mut().zip(gy).zip(y) {
                    *gv -= d * yv * yv;
                }
            }),
            Op::Softmax(a) => {
                let cols = node.value.cols();
                acc(*a, &mut |g| {
                    for ((gr, dr), yr) in g.chunks_mut(cols).zip(gy.chunks(cols)).zip(y.chunks(cols)) {
                        let inner: f64 = dr.iter().zip(yr).map(|(d, v)| d * v).sum();
                        for ((gv, d), yv) in gr.iter_mut().zip(dr).zip(yr) {
                            *gv += yv * (d - inner);
                        }
                    }
                })
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    let seg = &gy[off..off + len];
                    acc(*p, &mut |g| {
                        for (gv, d) in g.iter_mut().zip(seg) {
                            *gv += d;
                        }
                    });
                    off += len;
                }
            }
            Op::Slice(x, start) => acc(*x, &mut |g| {
                for (gv, d) in g[*start..*start + gy.len()].iter_mut().zip(gy) {
                    *gv += d;
                }
            }),
            Op::Stack(rows) => {
                let n = node.value.cols();
                for (r, id) in rows.iter().enumerate() {
                    let seg = &gy[r * n..(r + 1) * n];
                    acc(*id, &mut |g| {
                        for (gv, d) in g.iter_mut().zip(seg) {
                            *gv += d;
                        }
                    });
                }
            }
            Op::Row(m, i) => {
                let n = gy.len();
                acc(*m, &mut |g| {
                    for (gv, d) in g[i * n..(i + 1) * n].iter_mut().zip(gy) {
                        *gv += d;
                    }
                })
            }
            Op::Index(x, i) => acc(*x, &mut |g| g[*i] += gy[0]),
            Op::Sum(x) => acc(*x, &mut |g| {
                for gv in g.iter_mut() {
                    *gv += gy[0];
                }
            }),
            Op::Mean(x) => acc(*x, &mut |g| {
                let s = gy[0] / g.len() as f64;
                for gv in g.iter_mut() {
                    *gv += s;
                }
            }),
            Op::Max(x, arg) => acc(*x, &mut |g| g[*arg] += gy[0]),
            Op::SumRows(x) => {
                let n = gy.len();
                acc(*x, &mut |g| {
                    for (i, gv) in g.iter_mut().enumerate() {
                        *gv += gy[i % n];
                    }
                })
            }
            Op::MaxRows(x, arg) => {
                let n = gy.len();
                acc(*x, &mut |g| {
                    for (c, &r) in arg.iter().enumerate() {
                        g[r * n + c] += gy[c];
                    }
                })
            }
            Op::Median(x, sel) => acc(*x, &mut |g| {
                for &(i, w) in sel {
                    g[i] += w * gy[0];
                }
            }),
            Op::ScatterAdd(x, idx) => acc(*x, &mut |g| {
                for (gv, &i) in g.iter_mut().zip(idx) {
                    *gv += gy[i];
                }
            }),
            Op::Pad(x) => acc(*x, &mut |g| {
                let n = g.len();
                for (gv, d) in g.iter_mut().zip(&gy[..n]) {
                    *gv += d;
                }
            }),
        }
    }
}
