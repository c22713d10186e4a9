//! Per-snapshot GNN feature extraction.
//!
//! All slices share one parameter set. For efficiency the slices are stacked
//! into one block-diagonal operator, so a layer over every slice is a single
//! sparse product; there is no cross-slice coupling.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::dyngraph::{DynamicGraph, SnapshotGraph};
use crate::error::{Error, Result};
use crate::numcore::{DenseMatrix, Rng, SparseMatrix, Tape, Var};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackboneKind {
    Gcn,
    Sage,
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "sage" => Ok(Self::Sage),
            other => Err(Error::param("backbone", format!("unknown backbone `{other}`"))),
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gcn => "gcn",
            Self::Sage => "sage",
        })
    }
}

/// Two-layer backbone weights.
///
/// GCN holds `[Θ₁ (d×h), Θ₂ (h×h)]`; SAGE holds
/// `[Θ₁_self, Θ₁_nbr, Θ₂_self, Θ₂_nbr]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams {
    pub kind: BackboneKind,
    pub weights: Vec<DenseMatrix>,
}

impl BackboneParams {
    pub fn init(kind: BackboneKind, input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let weights = match kind {
            BackboneKind::Gcn => vec![
                rng.glorot_uniform(input_dim, hidden),
                rng.glorot_uniform(hidden, hidden),
            ],
            BackboneKind::Sage => vec![
                rng.glorot_uniform(input_dim, hidden),
                rng.glorot_uniform(input_dim, hidden),
                rng.glorot_uniform(hidden, hidden),
                rng.glorot_uniform(hidden, hidden),
            ],
        };
        Self { kind, weights }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn hidden(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            BackboneKind::Gcn => 2,
            BackboneKind::Sage => 4,
        };
        if self.weights.len() != expected {
            return Err(Error::shape(
                "backbone",
                format!("{} weights for {} (expected {expected})", self.weights.len(), self.kind),
            ));
        }
        let (d, h) = (self.input_dim(), self.hidden());
        let layer1 = match self.kind {
            BackboneKind::Gcn => 1,
            BackboneKind::Sage => 2,
        };
        for (k, w) in self.weights.iter().enumerate() {
            let want = if k < layer1 { (d, h) } else { (h, h) };
            if w.shape() != want {
                return Err(Error::shape(
                    "backbone",
                    format!("weight {k} is {:?}, expected {want:?}", w.shape()),
                ));
            }
            if !w.is_finite() {
                return Err(Error::Numeric(format!("backbone weight {k} is not finite")));
            }
        }
        Ok(())
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with self-loops on present nodes only.
pub fn gcn_operator(adjacency: &SparseMatrix, presence: &[bool]) -> Result<SparseMatrix> {
    let n = presence.len();
    if adjacency.shape() != (n, n) {
        return Err(Error::shape("gcn_operator", "adjacency does not match presence mask"));
    }
    let mut triplets: Vec<(usize, usize, f64)> = adjacency.triplets().collect();
    triplets.extend((0..n).filter(|&i| presence[i]).map(|i| (i, i, 1.0)));
    let with_loops = SparseMatrix::from_triplets(n, n, triplets)?;
    let inv_sqrt: Vec<f64> = with_loops
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { d.powf(-0.5) } else { 0.0 })
        .collect();
    let scaled = with_loops
        .triplets()
        .map(|(r, c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c]))
        .collect();
    SparseMatrix::from_triplets(n, n, scaled)
}

/// Row-normalized adjacency: row `i` averages the neighbours of `i`.
/// Isolated rows stay zero.
pub fn mean_operator(adjacency: &SparseMatrix) -> Result<SparseMatrix> {
    let sums = adjacency.row_sums();
    let triplets = adjacency
        .triplets()
        .map(|(r, c, v)| (r, c, v / sums[r]))
        .collect();
    SparseMatrix::from_triplets(adjacency.rows(), adjacency.cols(), triplets)
}

fn presence_factors(presence: &[bool]) -> Vec<f64> {
    presence.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
}

/// Structural constants of one or more stacked slices.
#[derive(Clone, Debug)]
pub struct StackedSlices {
    n: usize,
    slices: usize,
    gcn: Arc<SparseMatrix>,
    mean: Arc<SparseMatrix>,
    mask: Arc<Vec<f64>>,
    features: DenseMatrix,
    presence: Vec<Vec<bool>>,
}

impl StackedSlices {
    /// Stacks slices `0..slices` of `g`.
    pub fn prefix(g: &DynamicGraph, slices: usize) -> Result<Self> {
        if slices == 0 || slices > g.num_slices() {
            return Err(Error::param("slices", format!("{slices} of {}", g.num_slices())));
        }
        Self::from_snapshots(&g.snapshots()[..slices])
    }

    pub fn from_snapshots(snaps: &[SnapshotGraph]) -> Result<Self> {
        let n = snaps.first().map_or(0, SnapshotGraph::num_nodes);
        let d = snaps.first().map_or(0, |s| s.features.cols());
        let total = n * snaps.len();
        let mut gcn_t = Vec::new();
        let mut mean_t = Vec::new();
        let mut mask = Vec::with_capacity(total);
        let mut feat = Vec::with_capacity(total * d);
        for (k, s) in snaps.iter().enumerate() {
            if s.num_nodes() != n || s.features.cols() != d {
                return Err(Error::shape("stack", "slices disagree on n or d"));
            }
            let off = k * n;
            gcn_t.extend(
                gcn_operator(&s.adjacency, &s.presence)?
                    .triplets()
                    .map(|(r, c, v)| (r + off, c + off, v)),
            );
            mean_t.extend(
                mean_operator(&s.adjacency)?
                    .triplets()
                    .map(|(r, c, v)| (r + off, c + off, v)),
            );
            mask.extend(presence_factors(&s.presence));
            feat.extend_from_slice(s.features.as_slice());
        }
        Ok(Self {
            n,
            slices: snaps.len(),
            gcn: Arc::new(SparseMatrix::from_triplets(total, total, gcn_t)?),
            mean: Arc::new(SparseMatrix::from_triplets(total, total, mean_t)?),
            mask: Arc::new(mask),
            features: DenseMatrix::from_vec(total, d, feat)?,
            presence: snaps.iter().map(|s| s.presence.clone()).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_slices(&self) -> usize {
        self.slices
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn presence(&self) -> &[Vec<bool>] {
        &self.presence
    }
}

fn gcn_layer_on(tape: &mut Tape, op: &Arc<SparseMatrix>, mask: &Arc<Vec<f64>>, z: Var, theta: Var) -> Result<Var> {
    let zin = tape.scale_rows(z, mask.clone())?;
    let agg = tape.spmm(op.clone(), zin)?;
    let lin = tape.matmul(agg, theta)?;
    let act = tape.relu(lin);
    tape.scale_rows(act, mask.clone())
}

fn sage_layer_on(
    tape: &mut Tape,
    mean_op: &Arc<SparseMatrix>,
    mask: &Arc<Vec<f64>>,
    z: Var,
    theta_self: Var,
    theta_nbr: Var,
) -> Result<Var> {
    let zin = tape.scale_rows(z, mask.clone())?;
    let own = tape.matmul(zin, theta_self)?;
    let nbr_mean = tape.spmm(mean_op.clone(), zin)?;
    let nbr = tape.matmul(nbr_mean, theta_nbr)?;
    let sum = tape.add(own, nbr)?;
    let act = tape.relu(sum);
    tape.scale_rows(act, mask.clone())
}

/// Records the two-layer backbone on `tape` and returns the stacked
/// embeddings (`slices·n x h`). `weights` are tape handles in
/// [`BackboneParams::weights`] order.
pub fn forward(tape: &mut Tape, kind: BackboneKind, weights: &[Var], stacked: &StackedSlices) -> Result<Var> {
    let x = tape.leaf(stacked.features.clone());
    match kind {
        BackboneKind::Gcn => {
            let h1 = gcn_layer_on(tape, &stacked.gcn, &stacked.mask, x, weights[0])?;
            gcn_layer_on(tape, &stacked.gcn, &stacked.mask, h1, weights[1])
        }
        BackboneKind::Sage => {
            let h1 = sage_layer_on(tape, &stacked.mean, &stacked.mask, x, weights[0], weights[1])?;
            sage_layer_on(tape, &stacked.mean, &stacked.mask, h1, weights[2], weights[3])
        }
    }
}

fn check_layer_shapes(adjacency: &SparseMatrix, presence: &[bool], z: &DenseMatrix, thetas: &[&DenseMatrix]) -> Result<()> {
    let n = presence.len();
    if adjacency.shape() != (n, n) || z.rows() != n {
        return Err(Error::shape(
            "layer",
            format!("adjacency {:?}, {} presence flags, z {:?}", adjacency.shape(), n, z.shape()),
        ));
    }
    for t in thetas {
        if t.rows() != z.cols() {
            return Err(Error::shape("layer", format!("z {:?} with weight {:?}", z.shape(), t.shape())));
        }
    }
    Ok(())
}

/// One GCN layer, `relu(D̃^{-1/2} Ã D̃^{-1/2} z θ)`, on a single snapshot.
pub fn gcn_layer(adjacency: &SparseMatrix, presence: &[bool], z: &DenseMatrix, theta: &DenseMatrix) -> Result<DenseMatrix> {
    check_layer_shapes(adjacency, presence, z, &[theta])?;
    let op = Arc::new(gcn_operator(adjacency, presence)?);
    let mask = Arc::new(presence_factors(presence));
    let mut tape = Tape::new();
    let (zv, tv) = (tape.leaf(z.clone()), tape.leaf(theta.clone()));
    let out = gcn_layer_on(&mut tape, &op, &mask, zv, tv)?;
    Ok(tape.value(out).clone())
}

/// One mean-aggregator GraphSAGE layer,
/// `relu(z θ_self + mean_neighbours(z) θ_nbr)`, on a single snapshot.
pub fn sage_layer(
    adjacency: &SparseMatrix,
    presence: &[bool],
    z: &DenseMatrix,
    theta_self: &DenseMatrix,
    theta_nbr: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_layer_shapes(adjacency, presence, z, &[theta_self, theta_nbr])?;
    let op = Arc::new(mean_operator(adjacency)?);
    let mask = Arc::new(presence_factors(presence));
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let (sv, nv) = (tape.leaf(theta_self.clone()), tape.leaf(theta_nbr.clone()));
    let out = sage_layer_on(&mut tape, &op, &mask, zv, sv, nv)?;
    Ok(tape.value(out).clone())
}

/// Per-(node, slice) embeddings. Rows of absent nodes are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    n: usize,
    /// Stacked `slices·n x h`; row `t·n + i` is node `i` in slice `t`.
    z: DenseMatrix,
    presence: Vec<Vec<bool>>,
}

impl EmbeddingTable {
    pub fn new(z: DenseMatrix, presence: Vec<Vec<bool>>) -> Result<Self> {
        let n = presence.first().map_or(0, Vec::len);
        if presence.iter().any(|p| p.len() != n) || z.rows() != n * presence.len() {
            return Err(Error::shape(
                "embedding table",
                format!("{} rows for {} slices of {n} nodes", z.rows(), presence.len()),
            ));
        }
        Ok(Self { n, z, presence })
    }

    pub fn from_slices(slices: &[DenseMatrix], presence: Vec<Vec<bool>>) -> Result<Self> {
        let cols = slices.first().map_or(0, DenseMatrix::cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for s in slices {
            if s.cols() != cols {
                return Err(Error::shape("embedding table", "slices disagree on width"));
            }
            rows += s.rows();
            data.extend_from_slice(s.as_slice());
        }
        Self::new(DenseMatrix::from_vec(rows, cols, data)?, presence)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_slices(&self) -> usize {
        self.presence.len()
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    pub fn stacked(&self) -> &DenseMatrix {
        &self.z
    }

    pub fn row_index(&self, node: usize, slice: usize) -> usize {
        slice * self.n + node
    }

    pub fn get(&self, node: usize, slice: usize) -> &[f64] {
        self.z.row(self.row_index(node, slice))
    }

    pub fn is_present(&self, node: usize, slice: usize) -> bool {
        slice < self.presence.len() && node < self.n && self.presence[slice][node]
    }

    pub fn presence(&self) -> &[Vec<bool>] {
        &self.presence
    }

    pub fn slice(&self, t: usize) -> DenseMatrix {
        let rows: Vec<usize> = (t * self.n..(t + 1) * self.n).collect();
        self.z.gather_rows(&rows).expect("slice rows in range")
    }
}

/// Applies the backbone to every slice of `g`.
pub fn embed_snapshots(g: &DynamicGraph, params: &BackboneParams) -> Result<EmbeddingTable> {
    params.validate()?;
    if params.input_dim() != g.feature_dim() {
        return Err(Error::shape(
            "embed_snapshots",
            format!("backbone expects {} attributes, graph has {}", params.input_dim(), g.feature_dim()),
        ));
    }
    let stacked = StackedSlices::prefix(g, g.num_slices())?;
    let mut tape = Tape::new();
    let weights: Vec<Var> = params.weights.iter().map(|w| tape.leaf(w.clone())).collect();
    let z = forward(&mut tape, params.kind, &weights, &stacked)?;
    EmbeddingTable::new(tape.value(z).clone(), stacked.presence)
}
