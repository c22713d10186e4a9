//! Hypergraph propagation.
//!
//! Two layer forms are provided. The default message form sends each vertex,
//! for every hyperedge it belongs to, the Gaussian-weighted sum of the other
//! members' embeddings, then mixes those messages with a softmax over cosine
//! similarity to the vertex's own embedding. The spectral form multiplies by
//! the normalized operator `Dv^-1/2 H W De^-1 H^T Dv^-1/2`.
//!
//! Pair weights and the operators are built from detached embeddings and are
//! constants as far as gradients are concerned.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hyperbuild::{Hyperedge, Hypergraph, Metric};
use crate::numcore::{cosine, softmax_in_place, DenseMatrix, Rng, SparseMatrix, Tape, Var};

/// Lower bound on the Gaussian bandwidth.
pub const SIGMA_FLOOR: f64 = 1e-8;
pub const DEFAULT_LAYERS: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PropMode {
    #[default]
    Message,
    Spectral,
}

impl FromStr for PropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "message" => Ok(PropMode::Message),
            "spectral" => Ok(PropMode::Spectral),
            other => Err(Error::param("prop", format!("unknown propagation mode `{other}`"))),
        }
    }
}

impl fmt::Display for PropMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropMode::Message => "message",
            PropMode::Spectral => "spectral",
        })
    }
}

/// Vertex-edge incidence with cached degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceMatrix {
    h: SparseMatrix,
    edge_weights: Vec<f64>,
    dv: Vec<f64>,
    de: Vec<f64>,
}

impl IncidenceMatrix {
    /// `|V| x |E|`, 0/1.
    pub fn h(&self) -> &SparseMatrix {
        &self.h
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    /// Row sums of `H diag(w)`.
    pub fn vertex_degrees(&self) -> &[f64] {
        &self.dv
    }

    /// Column sums of `H`.
    pub fn edge_degrees(&self) -> &[f64] {
        &self.de
    }

    pub fn with_edge_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.h.cols() {
            return Err(Error::shape(
                "edge weights",
                format!("{} weights for {} edges", weights.len(), self.h.cols()),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Numeric("edge weights must be finite and non-negative".into()));
        }
        self.dv = self.h.spmm(&DenseMatrix::from_vec(weights.len(), 1, weights.clone())?)?.into_vec();
        self.edge_weights = weights;
        Ok(self)
    }
}

/// Builds `H` with unit edge weights.
pub fn incidence(hg: &Hypergraph) -> Result<IncidenceMatrix> {
    let nv = hg.num_vertices();
    let mut triplets = Vec::new();
    for (e, edge) in hg.edges.iter().enumerate() {
        for &m in &edge.members {
            if m >= nv {
                return Err(Error::Contract(format!("edge {e} references vertex {m} of {nv}")));
            }
            triplets.push((m, e, 1.0));
        }
    }
    let h = SparseMatrix::from_triplets(nv, hg.num_edges(), triplets)?;
    let de = h.col_sums();
    let dv = h.row_sums();
    Ok(IncidenceMatrix {
        h,
        edge_weights: vec![1.0; hg.num_edges()],
        dv,
        de,
    })
}

fn check_rows(hg: &Hypergraph, z: &DenseMatrix) -> Result<()> {
    if z.rows() != hg.num_vertices() {
        return Err(Error::shape(
            "hypergraph embeddings",
            format!("{} rows for {} vertices", z.rows(), hg.num_vertices()),
        ));
    }
    Ok(())
}

/// Median distance over all anchor-member pairs, floored at [`SIGMA_FLOOR`].
pub fn sigma_bandwidth(hg: &Hypergraph, z: &DenseMatrix, metric: Metric) -> Result<f64> {
    check_rows(hg, z)?;
    let mut d: Vec<f64> = hg
        .edges
        .iter()
        .flat_map(|e| e.members[1..].iter().map(move |&m| (e.anchor, m)))
        .map(|(a, m)| metric.distance(z.row(a), z.row(m)))
        .collect();
    if d.is_empty() {
        return Err(Error::Contract("no co-edge vertex pairs to set the bandwidth".into()));
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    Ok(median.max(SIGMA_FLOOR))
}

pub fn gaussian_weight(distance: f64, sigma: f64) -> f64 {
    (-(distance * distance) / (sigma * sigma)).exp()
}

/// Anchor-to-member weights for every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PairWeightTable {
    pub sigma: f64,
    /// `weights[e][j]` belongs to `edges[e].members[j + 1]`.
    pub weights: Vec<Vec<f64>>,
}

impl PairWeightTable {
    /// Mean anchor-member weight of each edge; 1 for singletons.
    pub fn edge_means(&self) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| if w.is_empty() { 1.0 } else { w.iter().sum::<f64>() / w.len() as f64 })
            .collect()
    }
}

pub fn pair_weights(hg: &Hypergraph, z: &DenseMatrix, sigma: f64, metric: Metric) -> Result<PairWeightTable> {
    check_rows(hg, z)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("{sigma} is not a positive bandwidth")));
    }
    let weights = hg
        .edges
        .iter()
        .map(|e| {
            e.members[1..]
                .iter()
                .map(|&m| gaussian_weight(metric.distance(z.row(e.anchor), z.row(m)), sigma))
                .collect()
        })
        .collect();
    Ok(PairWeightTable { sigma, weights })
}

/// Weighted sum of the other members' rows of `z`, as seen from `receiver`.
/// `weights[j]` is the weight of `edge.members[j]`; the receiver's own entry
/// is ignored.
pub fn edge_message(receiver: usize, edge: &Hyperedge, z: &DenseMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    if !edge.contains(receiver) {
        return Err(Error::Contract(format!("vertex {receiver} is not in the edge")));
    }
    if weights.len() != edge.len() {
        return Err(Error::shape("edge message", format!("{} weights for {} members", weights.len(), edge.len())));
    }
    let mut p = vec![0.0; z.cols()];
    for (&m, &w) in edge.members.iter().zip(weights) {
        if m == receiver {
            continue;
        }
        for (acc, &x) in p.iter_mut().zip(z.row(m)) {
            *acc += w * x;
        }
    }
    Ok(p)
}

/// Softmax over cosine similarity between `z_anchor` and each message.
/// Returns the mixed vector and the attention weights.
pub fn attention_aggregate(messages: &[Vec<f64>], z_anchor: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if messages.is_empty() {
        return Err(Error::Contract("attention over an empty message list".into()));
    }
    let mut alpha: Vec<f64> = messages.iter().map(|p| cosine(z_anchor, p)).collect();
    softmax_in_place(&mut alpha);
    let mut out = vec![0.0; z_anchor.len()];
    for (p, &a) in messages.iter().zip(&alpha) {
        for (o, &x) in out.iter_mut().zip(p) {
            *o += a * x;
        }
    }
    Ok((out, alpha))
}

/// Per-layer kernels of one propagation path.
#[derive(Clone, Debug, PartialEq)]
pub struct HgnnParams {
    pub thetas: Vec<DenseMatrix>,
}

impl HgnnParams {
    pub fn init(hidden: usize, layers: usize, rng: &mut Rng) -> Self {
        Self {
            thetas: (0..layers).map(|_| rng.glorot_uniform(hidden, hidden)).collect(),
        }
    }

    pub fn layers(&self) -> usize {
        self.thetas.len()
    }

    pub fn validate(&self, hidden: usize) -> Result<()> {
        for (l, t) in self.thetas.iter().enumerate() {
            if t.shape() != (hidden, hidden) {
                return Err(Error::shape("hgnn kernel", format!("layer {l} is {:?}, want {hidden}x{hidden}", t.shape())));
            }
            if !t.is_finite() {
                return Err(Error::Numeric(format!("hgnn kernel {l} is not finite")));
            }
        }
        Ok(())
    }
}

/// `Dv^-1/2 H W De^-1 H^T Dv^-1/2`. With `bypass`, vertices of zero degree
/// get an identity row instead of a zero row.
pub fn spectral_operator(inc: &IncidenceMatrix, bypass: bool) -> Result<SparseMatrix> {
    let nv = inc.h.rows();
    let inv_sqrt_dv: Vec<f64> = inc.dv.iter().map(|&d| if d > 0.0 { d.powf(-0.5) } else { 0.0 }).collect();
    let ht = inc.h.transpose();
    let mut triplets = Vec::new();
    for v in 0..nv {
        let (edges, _) = inc.h.row(v);
        for &e in edges {
            let scale = inc.edge_weights[e] / inc.de[e];
            let (members, _) = ht.row(e);
            for &u in members {
                triplets.push((v, u, inv_sqrt_dv[v] * scale * inv_sqrt_dv[u]));
            }
        }
        if bypass && inc.dv[v] == 0.0 {
            triplets.push((v, v, 1.0));
        }
    }
    SparseMatrix::from_triplets(nv, nv, triplets)
}

/// `relu(P z θ)` with `P` from [`spectral_operator`].
pub fn hgnn_spectral_layer(inc: &IncidenceMatrix, z: &DenseMatrix, theta: &DenseMatrix, bypass: bool) -> Result<DenseMatrix> {
    if z.rows() != inc.h.rows() || z.cols() != theta.rows() {
        return Err(Error::shape(
            "spectral layer",
            format!("z {:?}, theta {:?}, {} vertices", z.shape(), theta.shape(), inc.h.rows()),
        ));
    }
    let p = spectral_operator(inc, bypass)?;
    Ok(p.spmm(z)?.matmul(theta)?.relu())
}

/// The constant part of one propagation path: topology plus pair weights,
/// compiled into sparse operators.
#[derive(Clone, Debug)]
pub enum Propagator {
    Message {
        /// One row per (receiver, incident edge) message, ordered by receiver
        /// then edge index.
        gather: Arc<SparseMatrix>,
        receivers: Arc<Vec<usize>>,
        offsets: Arc<Vec<usize>>,
        /// 1 for vertices that receive no message.
        isolated: Arc<Vec<f64>>,
    },
    Spectral {
        operator: Arc<SparseMatrix>,
    },
}

impl Propagator {
    /// Compiles `hg` using the detached vertex embeddings `z` for the pair
    /// weights. A hypergraph without any co-edge pair needs no bandwidth.
    pub fn build(hg: &Hypergraph, z: &DenseMatrix, metric: Metric, mode: PropMode) -> Result<Self> {
        check_rows(hg, z)?;
        let has_pairs = hg.edges.iter().any(|e| e.len() > 1);
        let sigma = if has_pairs { sigma_bandwidth(hg, z, metric)? } else { 1.0 };
        let nv = hg.num_vertices();
        match mode {
            PropMode::Message => {
                let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nv];
                for (e, edge) in hg.edges.iter().enumerate() {
                    if edge.len() > 1 {
                        for &m in &edge.members {
                            incident[m].push(e);
                        }
                    }
                }
                let mut triplets = Vec::new();
                let mut receivers = Vec::new();
                let mut offsets = vec![0];
                let mut isolated = vec![0.0; nv];
                for (v, edges) in incident.iter().enumerate() {
                    for &e in edges {
                        let row = receivers.len();
                        for &u in &hg.edges[e].members {
                            if u != v {
                                let w = gaussian_weight(metric.distance(z.row(v), z.row(u)), sigma);
                                triplets.push((row, u, w));
                            }
                        }
                        receivers.push(v);
                    }
                    if edges.is_empty() {
                        isolated[v] = 1.0;
                    }
                    offsets.push(receivers.len());
                }
                Ok(Propagator::Message {
                    gather: Arc::new(SparseMatrix::from_triplets(receivers.len(), nv, triplets)?),
                    receivers: Arc::new(receivers),
                    offsets: Arc::new(offsets),
                    isolated: Arc::new(isolated),
                })
            }
            PropMode::Spectral => {
                let inc = incidence(hg)?;
                let w = if has_pairs {
                    pair_weights(hg, z, sigma, metric)?.edge_means()
                } else {
                    vec![1.0; hg.num_edges()]
                };
                let inc = inc.with_edge_weights(w)?;
                Ok(Propagator::Spectral {
                    operator: Arc::new(spectral_operator(&inc, true)?),
                })
            }
        }
    }

    /// One layer on the tape: mix, then `relu(. θ)`.
    pub fn layer(&self, tape: &mut Tape, z: Var, theta: Var) -> Result<Var> {
        let mixed = match self {
            Propagator::Message {
                gather,
                receivers,
                offsets,
                isolated,
            } => {
                let messages = tape.spmm(gather.clone(), z)?;
                let own = tape.gather_rows(z, receivers.clone())?;
                let sim = tape.row_cosine(own, messages)?;
                let alpha = tape.segment_softmax(sim, offsets.clone())?;
                let attended = tape.segment_weighted_sum(alpha, messages, offsets.clone())?;
                let own_path = tape.scale_rows(z, isolated.clone())?;
                tape.add(attended, own_path)?
            }
            Propagator::Spectral { operator } => tape.spmm(operator.clone(), z)?,
        };
        let pre = tape.matmul(mixed, theta)?;
        Ok(tape.relu(pre))
    }

    /// Applies every layer in `thetas` in turn.
    pub fn forward(&self, tape: &mut Tape, z: Var, thetas: &[Var]) -> Result<Var> {
        thetas.iter().try_fold(z, |acc, &t| self.layer(tape, acc, t))
    }
}

/// Runs `params.layers()` propagation rounds over `hg` outside of training.
/// Pair weights come from the input embeddings.
pub fn propagate(hg: &Hypergraph, z: &DenseMatrix, params: &HgnnParams, metric: Metric, mode: PropMode) -> Result<DenseMatrix> {
    if params.layers() == 0 {
        check_rows(hg, z)?;
        return Ok(z.clone());
    }
    let prop = Propagator::build(hg, z, metric, mode)?;
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let thetas: Vec<Var> = params.thetas.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = prop.forward(&mut tape, zv, &thetas)?;
    Ok(tape.value(out).clone())
}
