//! Reverse-mode gradient tape over a closed set of matrix operations.
//!
//! Nodes are appended in evaluation order, so every input of a node has a
//! smaller index than the node itself. The backward pass walks the node list
//! once in reverse, which is a reverse topological order.

use std::sync::Arc;

use super::dense::{dot, norm, softmax_in_place, DenseMatrix};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Products below this magnitude are treated as zero-norm in cosine similarity.
const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    ScaleRows(Var, Arc<Vec<f64>>),
    Relu(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    SelectElements(Var, Arc<Vec<usize>>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    CrossEntropy(Var, Arc<Vec<usize>>),
    RowCosine(Var, Var),
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    SegmentWeightedSum(Var, Var, Arc<Vec<usize>>),
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    /// Softmax probabilities kept by `CrossEntropy` for its backward pass.
    cache: Option<DenseMatrix>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// The gradient of the loss with respect to `var`, or `None` when the
    /// loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&DenseMatrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but yields a zero matrix of the right shape
    /// for values the loss does not reach.
    pub fn get_or_zeros(&self, var: Var, tape: &Tape) -> DenseMatrix {
        self.get(var).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(var).shape();
            DenseMatrix::zeros(r, c)
        })
    }
}

fn check_segments(op: &'static str, offsets: &[usize], rows: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&rows)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            op,
            format!("segment offsets do not partition {rows} rows"),
        ))
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

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            cache: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input value. Gradients are available for every leaf.
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Sparse times dense; only the dense side is differentiated.
    pub fn spmm(&mut self, s: Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = s.spmm(self.value(d))?;
        Ok(self.push(value, Op::SpMM(s, d)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    /// Multiplies row `i` of `a` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: Arc<Vec<f64>>) -> Result<Var> {
        let src = self.value(a);
        if factors.len() != src.rows() {
            return Err(Error::shape(
                "scale_rows",
                format!("{} factors for {} rows", factors.len(), src.rows()),
            ));
        }
        let mut value = src.clone();
        for (r, &f) in factors.iter().enumerate() {
            value.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push(value, Op::ScaleRows(a, factors)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).relu();
        self.push(value, Op::Relu(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax_rows();
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, a: Var, indices: Arc<Vec<usize>>) -> Result<Var> {
        let value = self.value(a).gather_rows(&indices)?;
        Ok(self.push(value, Op::GatherRows(a, indices)))
    }

    /// Per-element gather: `out[r][c] = a[indices[r * cols + c]][c]`, where
    /// `cols` is the column count of `a`. Backs max/min pooling.
    pub fn select_elements(&mut self, a: Var, indices: Arc<Vec<usize>>) -> Result<Var> {
        let src = self.value(a);
        let cols = src.cols();
        if cols == 0 || indices.len() % cols != 0 {
            return Err(Error::shape(
                "select_elements",
                format!("{} indices for {cols} columns", indices.len()),
            ));
        }
        let out_rows = indices.len() / cols;
        let mut value = DenseMatrix::zeros(out_rows, cols);
        for (k, &src_row) in indices.iter().enumerate() {
            if src_row >= src.rows() {
                return Err(Error::shape(
                    "select_elements",
                    format!("row {src_row} out of range for {} rows", src.rows()),
                ));
            }
            let (r, c) = (k / cols, k % cols);
            value.set(r, c, src.get(src_row, c));
        }
        Ok(self.push(value, Op::SelectElements(a, indices)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.value(p).cols(),
            None => return Err(Error::shape("concat_rows", "no inputs")),
        };
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column counts {cols} and {}", m.cols()),
                ));
            }
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
        }
        let value = DenseMatrix::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Error::Contract("mean of an empty matrix".into()));
        }
        let value = DenseMatrix::scalar(m.sum() / m.len() as f64);
        Ok(self.push(value, Op::Mean(a)))
    }

    /// Mean cross-entropy of row-wise softmax(`logits`) against class targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<Vec<usize>>) -> Result<Var> {
        let l = self.value(logits);
        if targets.len() != l.rows() {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} targets for {} rows", targets.len(), l.rows()),
            ));
        }
        if targets.is_empty() {
            return Err(Error::Contract("cross-entropy over zero rows".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= l.cols()) {
            return Err(Error::shape(
                "cross_entropy",
                format!("target class {bad} with {} logits", l.cols()),
            ));
        }
        let probs = l.softmax_rows();
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            // log-sum-exp form keeps the loss finite for peaked logits.
            let row = l.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let value = DenseMatrix::scalar(total / targets.len() as f64);
        let var = self.push(value, Op::CrossEntropy(logits, targets));
        self.nodes[var.0].cache = Some(probs);
        Ok(var)
    }

    /// Cosine similarity of matching rows, as an `m x 1` column. Rows where
    /// either side has (near) zero norm get similarity 0.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.shape() != mb.shape() {
            return Err(Error::shape(
                "row_cosine",
                format!("{:?} vs {:?}", ma.shape(), mb.shape()),
            ));
        }
        let mut value = DenseMatrix::zeros(ma.rows(), 1);
        for r in 0..ma.rows() {
            value.set(r, 0, cosine(ma.row(r), mb.row(r)));
        }
        Ok(self.push(value, Op::RowCosine(a, b)))
    }

    /// Softmax of an `m x 1` score column within each segment
    /// `offsets[s]..offsets[s + 1]`.
    pub fn segment_softmax(&mut self, scores: Var, offsets: Arc<Vec<usize>>) -> Result<Var> {
        let s = self.value(scores);
        if s.cols() != 1 {
            return Err(Error::shape("segment_softmax", "scores must be a column"));
        }
        check_segments("segment_softmax", &offsets, s.rows())?;
        let mut value = s.clone();
        for w in offsets.windows(2) {
            softmax_in_place(&mut value.as_mut_slice()[w[0]..w[1]]);
        }
        Ok(self.push(value, Op::SegmentSoftmax(scores, offsets)))
    }

    /// Row `s` of the output is `Σ_{r in segment s} weights[r] · values[r]`.
    pub fn segment_weighted_sum(
        &mut self,
        weights: Var,
        values: Var,
        offsets: Arc<Vec<usize>>,
    ) -> Result<Var> {
        let (w, v) = (self.value(weights), self.value(values));
        if w.cols() != 1 || w.rows() != v.rows() {
            return Err(Error::shape(
                "segment_weighted_sum",
                format!("weights {:?} for values {:?}", w.shape(), v.shape()),
            ));
        }
        check_segments("segment_weighted_sum", &offsets, v.rows())?;
        let mut out = DenseMatrix::zeros(offsets.len() - 1, v.cols());
        for (seg, span) in offsets.windows(2).enumerate() {
            let dst = out.row_mut(seg);
            for r in span[0]..span[1] {
                let wr = w.get(r, 0);
                for (o, &x) in dst.iter_mut().zip(v.row(r)) {
                    *o += wr * x;
                }
            }
        }
        Ok(self.push(out, Op::SegmentWeightedSum(weights, values, offsets)))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        node: &Node,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul_t(self.value(*b))?;
                let gb = self.value(*a).t_matmul(g)?;
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::SpMM(s, d) => accumulate(grads, *d, s.t_spmm(g)?)?,
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Hadamard(a, b) => {
                let ga = g.hadamard(self.value(*b))?;
                let gb = g.hadamard(self.value(*a))?;
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.scale(*f))?,
            Op::ScaleRows(a, factors) => {
                let mut ga = g.clone();
                for (r, &f) in factors.iter().enumerate() {
                    ga.row_mut(r).iter_mut().for_each(|v| *v *= f);
                }
                accumulate(grads, *a, ga)?;
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for (gv, &xv) in ga.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                accumulate(grads, *a, ga)?;
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose())?,
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let inner = dot(y.row(r), g.row(r));
                    for c in 0..y.cols() {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - inner));
                    }
                }
                accumulate(grads, *a, ga)?;
            }
            Op::GatherRows(a, indices) => {
                let src = self.value(*a);
                let mut ga = DenseMatrix::zeros(src.rows(), src.cols());
                for (dst, &s) in indices.iter().enumerate() {
                    for (o, &v) in ga.row_mut(s).iter_mut().zip(g.row(dst)) {
                        *o += v;
                    }
                }
                accumulate(grads, *a, ga)?;
            }
            Op::SelectElements(a, indices) => {
                let src = self.value(*a);
                let cols = src.cols();
                let mut ga = DenseMatrix::zeros(src.rows(), cols);
                for (k, &s) in indices.iter().enumerate() {
                    let c = k % cols;
                    let cur = ga.get(s, c);
                    ga.set(s, c, cur + g.get(k / cols, c));
                }
                accumulate(grads, *a, ga)?;
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    let idx: Vec<usize> = (start..start + rows).collect();
                    accumulate(grads, p, g.gather_rows(&idx)?)?;
                    start += rows;
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                accumulate(grads, *a, DenseMatrix::filled(r, c, g.get(0, 0)))?;
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let v = g.get(0, 0) / (r * c) as f64;
                accumulate(grads, *a, DenseMatrix::filled(r, c, v))?;
            }
            Op::CrossEntropy(logits, targets) => {
                let probs = node.cache.as_ref().expect("cross-entropy caches probabilities");
                let n = targets.len() as f64;
                let scale = g.get(0, 0) / n;
                let mut gl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let cur = gl.get(r, t);
                    gl.set(r, t, cur - 1.0);
                }
                accumulate(grads, *logits, gl.scale(scale))?;
            }
            Op::RowCosine(a, b) => {
                let (ma, mb) = (self.value(*a), self.value(*b));
                let mut ga = DenseMatrix::zeros(ma.rows(), ma.cols());
                let mut gb = DenseMatrix::zeros(mb.rows(), mb.cols());
                for r in 0..ma.rows() {
                    let (x, y) = (ma.row(r), mb.row(r));
                    let (nx, ny) = (norm(x), norm(y));
                    if nx * ny < COSINE_NORM_FLOOR {
                        continue;
                    }
                    let s = node.value.get(r, 0);
                    let up = g.get(r, 0);
                    for c in 0..ma.cols() {
                        ga.set(r, c, up * (y[c] / (nx * ny) - s * x[c] / (nx * nx)));
                        gb.set(r, c, up * (x[c] / (nx * ny) - s * y[c] / (ny * ny)));
                    }
                }
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::SegmentSoftmax(scores, offsets) => {
                let y = node.value.as_slice();
                let gy = g.as_slice();
                let mut gs = DenseMatrix::zeros(y.len(), 1);
                for w in offsets.windows(2) {
                    let span = w[0]..w[1];
                    let inner = dot(&y[span.clone()], &gy[span.clone()]);
                    for r in span {
                        gs.set(r, 0, y[r] * (gy[r] - inner));
                    }
                }
                accumulate(grads, *scores, gs)?;
            }
            Op::SegmentWeightedSum(weights, values, offsets) => {
                let (w, v) = (self.value(*weights), self.value(*values));
                let mut gw = DenseMatrix::zeros(w.rows(), 1);
                let mut gv = DenseMatrix::zeros(v.rows(), v.cols());
                for (seg, span) in offsets.windows(2).enumerate() {
                    let up = g.row(seg);
                    for r in span[0]..span[1] {
                        gw.set(r, 0, dot(up, v.row(r)));
                        let wr = w.get(r, 0);
                        for (o, &u) in gv.row_mut(r).iter_mut().zip(up) {
                            *o += wr * u;
                        }
                    }
                }
                accumulate(grads, *weights, gw)?;
                accumulate(grads, *values, gv)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], var: Var, g: DenseMatrix) -> Result<()> {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Cosine similarity with the zero-norm guard used by [`Tape::row_cosine`].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom < COSINE_NORM_FLOOR {
        0.0
    } else {
        dot(a, b) / denom
    }
}
