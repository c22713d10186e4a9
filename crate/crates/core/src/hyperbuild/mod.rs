//! Hypergraph construction.
//!
//! Individual-level hyperedges join a `(node, slice)` vertex with its `K`
//! nearest neighbours among vertices of *other* slices within a temporal
//! radius τ. Three radii (short, mid, long) each contribute one hyperedge per
//! vertex and the results are unioned. Group-level hypergraphs apply the same
//! construction per class to clustered class prototypes.

mod group;
mod kmeans;
mod knn;

pub use group::{group_prototypes, prototype_matrix, Aggregation, GroupPrototype};
pub use kmeans::{kmeans, KMeansResult, KMEANS_MAX_ITERS};
pub use knn::{build_group, build_group_union, build_individual, knn_temporal, rank_neighbors, TemporalPoints};

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{cosine, DenseMatrix};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CLUSTERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scale {
    Short,
    Mid,
    Long,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Short, Scale::Mid, Scale::Long];
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Short => "short",
            Scale::Mid => "mid",
            Scale::Long => "long",
        })
    }
}

/// Temporal radii for the three hyperedge scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TauScales {
    pub short: usize,
    pub mid: usize,
    pub long: usize,
}

impl TauScales {
    pub fn new(short: usize, mid: usize, long: usize) -> Result<Self> {
        if !(short <= mid && mid <= long) {
            return Err(Error::param(
                "tau",
                format!("need short <= mid <= long, got {short},{mid},{long}"),
            ));
        }
        Ok(Self { short, mid, long })
    }

    /// `1, ⌈T/3⌉, T−1` for `T` slices.
    pub fn defaults_for(slices: usize) -> Self {
        let long = slices.saturating_sub(1);
        let mid = slices.div_ceil(3).min(long);
        let short = 1.min(mid);
        Self { short, mid, long }
    }

    pub fn get(&self, scale: Scale) -> usize {
        match scale {
            Scale::Short => self.short,
            Scale::Mid => self.mid,
            Scale::Long => self.long,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
    Chebyshev,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => self.rank_key(a, b).sqrt(),
            _ => self.rank_key(a, b),
        }
    }

    /// Monotone transform of [`distance`](Self::distance) used for ranking:
    /// squared distance for Euclidean, the distance itself otherwise.
    pub fn rank_key(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Cosine => 1.0 - cosine(a, b),
            Metric::Chebyshev => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            "chebyshev" => Ok(Metric::Chebyshev),
            other => Err(Error::param("metric", format!("unknown metric `{other}`"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Chebyshev => "chebyshev",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexId {
    Node { node: usize, slice: usize },
    Prototype { class: usize, cluster: usize, slice: usize },
}

impl VertexId {
    pub fn slice(self) -> usize {
        match self {
            VertexId::Node { slice, .. } | VertexId::Prototype { slice, .. } => slice,
        }
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VertexId::Node { node, slice } => write!(f, "{node}@{slice}"),
            VertexId::Prototype { class, cluster, slice } => write!(f, "c{class}m{cluster}@{slice}"),
        }
    }
}

/// A hyperedge over vertex positions of its [`Hypergraph`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hyperedge {
    pub anchor: usize,
    /// Anchor first, then neighbours in rank order.
    pub members: Vec<usize>,
    pub scale: Scale,
}

impl Hyperedge {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<Hyperedge>,
    /// Row of each vertex in the matrix it was built from (embedding table
    /// rows or prototype list positions).
    pub source_rows: Vec<usize>,
    /// Detached vertex features, one row per vertex.
    pub features: DenseMatrix,
    pub taus: TauScales,
}

impl Hypergraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Checks the structural invariants: members in range, anchor included,
    /// at most `k + 1` members, and every non-anchor member within
    /// `0 < |t − t'| ≤ τ(scale)` of the anchor.
    pub fn validate(&self, k: usize) -> Result<()> {
        let nv = self.vertices.len();
        if self.source_rows.len() != nv || self.features.rows() != nv {
            return Err(Error::Contract("vertex tables disagree in length".into()));
        }
        for (e, edge) in self.edges.iter().enumerate() {
            if edge.members.iter().any(|&m| m >= nv) || edge.anchor >= nv {
                return Err(Error::Contract(format!("edge {e} references an unknown vertex")));
            }
            if edge.members.first() != Some(&edge.anchor) {
                return Err(Error::Contract(format!("edge {e} does not start with its anchor")));
            }
            if edge.members.len() > k + 1 {
                return Err(Error::Contract(format!("edge {e} has {} members", edge.members.len())));
            }
            let t = self.vertices[edge.anchor].slice();
            let tau = self.taus.get(edge.scale);
            for &m in &edge.members[1..] {
                let gap = t.abs_diff(self.vertices[m].slice());
                if gap == 0 || gap > tau {
                    return Err(Error::Contract(format!(
                        "edge {e} ({}) spans {gap} slices with tau {tau}",
                        edge.scale
                    )));
                }
            }
        }
        Ok(())
    }

    /// One line per edge: `scale anchor: member member ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = write!(out, "{} {}:", e.scale, self.vertices[e.anchor]);
            for &m in &e.members[1..] {
                let _ = write!(out, " {}", self.vertices[m]);
            }
            out.push('\n');
        }
        out
    }
}
