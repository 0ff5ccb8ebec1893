//! Reverse-mode differentiation over a tape of dense-matrix operations.
//!
//! Every operation appends one node whose value is computed eagerly. Nodes are
//! stored in creation order, which is already a topological order, so the
//! backward sweep walks the tape from the root down to index 0 and visits each
//! node at most once.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ndmath::mat::{dot, Mat, DEGENERATE_NORM};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Symmetric adjacency in CSR form, used by [`Tape::neighbor_sum`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    /// Builds the adjacency of an undirected graph on `num_nodes` nodes.
    /// Each pair is inserted in both directions.
    pub fn from_undirected(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Index(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0; offsets[num_nodes]];
        for &(u, v) in edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        // ascending neighbor order keeps the summation order fixed
        for i in 0..num_nodes {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Ok(Adjacency { offsets, neighbors })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// `out_v = h_v + Σ_{u ∈ N(v)} h_u`.
    fn apply(&self, h: &Mat) -> Mat {
        let mut out = h.clone();
        for v in 0..self.num_nodes() {
            let dst = out.row_mut(v);
            for &u in self.neighbors(v) {
                for (o, s) in dst.iter_mut().zip(h.row(u)) {
                    *o += s;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBroadcast(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    SoftmaxRows(Var),
    L2NormalizeRows(Var),
    SegmentSum(Var, Arc<[usize]>),
    NeighborSum(Var, Arc<Adjacency>),
    SumAll(Var),
    PickPerRow(Var, Arc<[usize]>),
    LogSumExpRows(Var, Arc<[Option<usize>]>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Mat,
    op: Op,
}

/// A recording of matrix operations for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`, with zeros for disconnected nodes.
    pub fn wrt(&self, v: Var) -> Mat {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Mat::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input. Constants are leaves whose gradient is ignored.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Value of a `1x1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(value, Op::MatMulNT(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Adds a `1 x m` row to every row of an `n x m` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(bias));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + broadcast {:?}", am.shape(), bm.shape()),
            ));
        }
        let mut value = am.clone();
        for i in 0..value.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(bm.row(0)) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRowBroadcast(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    /// `max(x, 0)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax_rows()?;
        Ok(self.push(value, Op::SoftmaxRows(a)))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).l2_normalize_rows()?;
        Ok(self.push(value, Op::L2NormalizeRows(a)))
    }

    /// Row `g` of the output is the sum of input rows whose segment id is `g`,
    /// accumulated in ascending row order.
    pub fn segment_sum(&mut self, a: Var, segments: Arc<[usize]>, num_segments: usize) -> Result<Var> {
        let am = self.value(a);
        if segments.len() != am.rows() {
            return Err(Error::shape(
                "segment_sum",
                format!("{} segment ids for {} rows", segments.len(), am.rows()),
            ));
        }
        let mut value = Mat::zeros(num_segments, am.cols());
        for (r, &g) in segments.iter().enumerate() {
            if g >= num_segments {
                return Err(Error::Index(format!(
                    "segment id {g} at row {r} not below {num_segments}"
                )));
            }
            for (o, v) in value.row_mut(g).iter_mut().zip(am.row(r)) {
                *o += v;
            }
        }
        Ok(self.push(value, Op::SegmentSum(a, segments)))
    }

    /// Self plus neighbor sum, the aggregation step of a GIN layer with zero epsilon.
    pub fn neighbor_sum(&mut self, a: Var, adjacency: Arc<Adjacency>) -> Result<Var> {
        let am = self.value(a);
        if adjacency.num_nodes() != am.rows() {
            return Err(Error::shape(
                "neighbor_sum",
                format!("adjacency over {} nodes, features have {} rows", adjacency.num_nodes(), am.rows()),
            ));
        }
        let value = adjacency.apply(am);
        Ok(self.push(value, Op::NeighborSum(a, adjacency)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Mat::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// `out_i = a[i, cols[i]]`, an `n x 1` column.
    pub fn pick_per_row(&mut self, a: Var, cols: Arc<[usize]>) -> Result<Var> {
        let am = self.value(a);
        if cols.len() != am.rows() {
            return Err(Error::shape(
                "pick_per_row",
                format!("{} indices for {} rows", cols.len(), am.rows()),
            ));
        }
        let mut out = Vec::with_capacity(cols.len());
        for (i, &c) in cols.iter().enumerate() {
            if c >= am.cols() {
                return Err(Error::Index(format!("column {c} in row {i}, matrix has {}", am.cols())));
            }
            out.push(am.get(i, c));
        }
        Ok(self.push(Mat::column(&out), Op::PickPerRow(a, cols)))
    }

    /// Row-wise `log Σ_j exp(a_ij)` over `j != exclude[i]`, an `n x 1` column.
    pub fn logsumexp_rows(&mut self, a: Var, exclude: Arc<[Option<usize>]>) -> Result<Var> {
        let am = self.value(a);
        if exclude.len() != am.rows() {
            return Err(Error::shape(
                "logsumexp_rows",
                format!("{} exclusions for {} rows", exclude.len(), am.rows()),
            ));
        }
        let mut out = Vec::with_capacity(am.rows());
        for (i, ex) in exclude.iter().enumerate() {
            let row = am.row(i);
            let kept = row.iter().enumerate().filter(|(j, _)| Some(*j) != *ex).map(|(_, &v)| v);
            let max = kept.clone().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("row {i} has no terms left after exclusion")));
            }
            out.push(max + kept.map(|v| (v - max).exp()).sum::<f64>().ln());
        }
        Ok(self.push(Mat::column(&out), Op::LogSumExpRows(a, exclude)))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 root, got {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Mat>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Mat::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = upstream.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&upstream)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulNT(a, b) => {
                    let ga = upstream.matmul(self.value(*b))?;
                    let gb = upstream.matmul_tn(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, upstream.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, upstream.clone());
                    accumulate(&mut grads, *b, upstream.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, upstream.scale(-1.0));
                    accumulate(&mut grads, *a, upstream.clone());
                }
                Op::Mul(a, b) => {
                    let ga = upstream.hadamard(self.value(*b))?;
                    let gb = upstream.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRowBroadcast(a, bias) => {
                    let gb = Mat::new(1, upstream.cols(), upstream.col_sums())?;
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *a, upstream.clone());
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, upstream.scale(*s)),
                Op::Relu(a) => {
                    let g = upstream.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut grads, *a, g);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, upstream.hadamard(&node.value)?),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = Mat::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let inner = dot(upstream.row(i), y.row(i));
                        for ((o, &u), &yv) in g.row_mut(i).iter_mut().zip(upstream.row(i)).zip(y.row(i)) {
                            *o = yv * (u - inner);
                        }
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::L2NormalizeRows(a) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut g = Mat::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let n = crate::ndmath::mat::norm(x.row(i)).max(DEGENERATE_NORM);
                        let inner = dot(upstream.row(i), y.row(i));
                        for ((o, &u), &yv) in g.row_mut(i).iter_mut().zip(upstream.row(i)).zip(y.row(i)) {
                            *o = (u - yv * inner) / n;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::SegmentSum(a, segments) => {
                    let cols = upstream.cols();
                    let mut g = Mat::zeros(segments.len(), cols);
                    for (r, &s) in segments.iter().enumerate() {
                        g.row_mut(r).copy_from_slice(upstream.row(s));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::NeighborSum(a, adjacency) => {
                    // the aggregation matrix I + A is symmetric
                    accumulate(&mut grads, *a, adjacency.apply(&upstream));
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Mat::filled(r, c, upstream.get(0, 0)));
                }
                Op::PickPerRow(a, cols) => {
                    let (r, c) = self.value(*a).shape();
                    let mut g = Mat::zeros(r, c);
                    for (i, &j) in cols.iter().enumerate() {
                        g.set(i, j, upstream.get(i, 0));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::LogSumExpRows(a, exclude) => {
                    let x = self.value(*a);
                    let mut g = Mat::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let lse = node.value.get(i, 0);
                        let u = upstream.get(i, 0);
                        for (j, (o, &v)) in g.row_mut(i).iter_mut().zip(x.row(i)).enumerate() {
                            if Some(j) != exclude[i] {
                                *o = u * (v - lse).exp();
                            }
                        }
                    }
                    accumulate(&mut grads, *a, g);
                }
            }
            // gradients stay available for every node, not only leaves
            grads[idx] = Some(upstream);
        }

        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
