use std::cmp::Ordering;

use super::{GroupPrototype, Hyperedge, Hypergraph, Metric, Scale, TauScales, VertexId};
use crate::backbone::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

/// Candidate vertices for temporal KNN: a feature row, a slice and a
/// within-slice id (node index or cluster index) per point.
#[derive(Clone, Debug)]
pub struct TemporalPoints<'a> {
    features: &'a DenseMatrix,
    slices: Vec<usize>,
    ids: Vec<usize>,
}

impl<'a> TemporalPoints<'a> {
    pub fn new(features: &'a DenseMatrix, slices: Vec<usize>, ids: Vec<usize>) -> Result<Self> {
        if slices.len() != features.rows() || ids.len() != features.rows() {
            return Err(Error::shape(
                "temporal points",
                format!("{} rows, {} slices, {} ids", features.rows(), slices.len(), ids.len()),
            ));
        }
        Ok(Self { features, slices, ids })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

#[derive(Clone)]
struct Candidate {
    key: f64,
    gap: usize,
    slice: usize,
    id: usize,
    point: usize,
}

/// Ordering: distance, then temporal gap, then slice index, then id.
fn by_rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.key
        .total_cmp(&b.key)
        .then(a.gap.cmp(&b.gap))
        .then(a.slice.cmp(&b.slice))
        .then(a.id.cmp(&b.id))
}

/// Every point in another slice within `max_tau` of `anchor`, unordered.
fn candidates(points: &TemporalPoints<'_>, anchor: usize, max_tau: usize, metric: Metric) -> Vec<Candidate> {
    let t = points.slices[anchor];
    let za = points.features.row(anchor);
    (0..points.len())
        .filter_map(|p| {
            let slice = points.slices[p];
            let gap = t.abs_diff(slice);
            (gap != 0 && gap <= max_tau).then(|| Candidate {
                key: metric.rank_key(za, points.features.row(p)),
                gap,
                slice,
                id: points.ids[p],
                point: p,
            })
        })
        .collect()
}

/// The best `k` of `cands` in rank order.
fn top_k(mut cands: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    if k > 0 && cands.len() > k {
        cands.select_nth_unstable_by(k - 1, by_rank);
    }
    cands.truncate(k);
    cands.sort_by(by_rank);
    cands
}

/// The `k` nearest points to `anchor` in other slices within `tau`, ranked.
pub fn rank_neighbors(points: &TemporalPoints<'_>, anchor: usize, k: usize, tau: usize, metric: Metric) -> Vec<usize> {
    if k == 0 || tau == 0 {
        return Vec::new();
    }
    top_k(candidates(points, anchor, tau, metric), k)
        .into_iter()
        .map(|c| c.point)
        .collect()
}

/// Temporal KNN for one `(node, slice)` anchor of an embedding table.
/// Returns the neighbours as `(node, slice)` pairs in rank order; the anchor
/// itself is not included.
pub fn knn_temporal(
    table: &EmbeddingTable,
    anchor: (usize, usize),
    k: usize,
    tau: usize,
    metric: Metric,
) -> Result<Vec<(usize, usize)>> {
    let (node, slice) = anchor;
    if !table.is_present(node, slice) {
        return Err(Error::Contract(format!("anchor {node}@{slice} is not present")));
    }
    let (vertices, rows) = present_vertices(table);
    let features = table.stacked().gather_rows(&rows)?;
    let points = individual_points(&features, &vertices)?;
    let pos = vertices
        .iter()
        .position(|&v| v == VertexId::Node { node, slice })
        .expect("present anchor is a vertex");
    Ok(rank_neighbors(&points, pos, k, tau, metric)
        .into_iter()
        .map(|p| match vertices[p] {
            VertexId::Node { node, slice } => (node, slice),
            VertexId::Prototype { .. } => unreachable!("individual vertices only"),
        })
        .collect())
}

fn present_vertices(table: &EmbeddingTable) -> (Vec<VertexId>, Vec<usize>) {
    let mut vertices = Vec::new();
    let mut rows = Vec::new();
    for slice in 0..table.num_slices() {
        for node in 0..table.num_nodes() {
            if table.is_present(node, slice) {
                vertices.push(VertexId::Node { node, slice });
                rows.push(table.row_index(node, slice));
            }
        }
    }
    (vertices, rows)
}

fn individual_points<'a>(features: &'a DenseMatrix, vertices: &[VertexId]) -> Result<TemporalPoints<'a>> {
    let slices = vertices.iter().map(|v| v.slice()).collect();
    let ids = vertices
        .iter()
        .map(|v| match *v {
            VertexId::Node { node, .. } => node,
            VertexId::Prototype { cluster, .. } => cluster,
        })
        .collect();
    TemporalPoints::new(features, slices, ids)
}

/// One hyperedge per (vertex, scale), ordered by anchor then scale.
fn edges_for(points: &TemporalPoints<'_>, k: usize, taus: TauScales, metric: Metric) -> Vec<Hyperedge> {
    let mut edges = Vec::with_capacity(points.len() * 3);
    for anchor in 0..points.len() {
        let all = if k == 0 || taus.long == 0 {
            Vec::new()
        } else {
            candidates(points, anchor, taus.long, metric)
        };
        for scale in Scale::ALL {
            let tau = taus.get(scale);
            let within: Vec<Candidate> = all.iter().filter(|c| c.gap <= tau).cloned().collect();
            let mut members = vec![anchor];
            members.extend(top_k(within, k).into_iter().map(|c| c.point));
            edges.push(Hyperedge { anchor, members, scale });
        }
    }
    edges
}

/// Individual-level hypergraph over every present `(node, slice)` vertex of
/// `table`. Vertices are ordered slice-major.
pub fn build_individual(table: &EmbeddingTable, k: usize, taus: TauScales, metric: Metric) -> Result<Hypergraph> {
    TauScales::new(taus.short, taus.mid, taus.long)?;
    let (vertices, rows) = present_vertices(table);
    let features = table.stacked().gather_rows(&rows)?;
    let edges = {
        let points = individual_points(&features, &vertices)?;
        edges_for(&points, k, taus, metric)
    };
    Ok(Hypergraph {
        vertices,
        edges,
        source_rows: rows,
        features,
        taus,
    })
}

/// Group-level hypergraph over the prototypes of one class. `source_rows`
/// index into `prototypes`.
pub fn build_group(prototypes: &[GroupPrototype], k: usize, taus: TauScales, metric: Metric) -> Result<Hypergraph> {
    TauScales::new(taus.short, taus.mid, taus.long)?;
    let Some(first) = prototypes.first() else {
        return Err(Error::Contract("group hypergraph needs at least one prototype".into()));
    };
    if prototypes.iter().any(|p| p.class != first.class) {
        return Err(Error::Contract("prototypes of several classes in one group hypergraph".into()));
    }
    let vertices: Vec<VertexId> = prototypes
        .iter()
        .map(|p| VertexId::Prototype {
            class: p.class,
            cluster: p.cluster,
            slice: p.slice,
        })
        .collect();
    let vectors: Vec<&[f64]> = prototypes.iter().map(|p| p.vector.as_slice()).collect();
    let features = DenseMatrix::from_rows(&vectors);
    let edges = {
        let points = individual_points(&features, &vertices)?;
        edges_for(&points, k, taus, metric)
    };
    Ok(Hypergraph {
        vertices,
        edges,
        source_rows: (0..prototypes.len()).collect(),
        features,
        taus,
    })
}

/// Union of the per-class group hypergraphs; `source_rows` index into
/// `prototypes`. Classes without prototypes contribute nothing.
pub fn build_group_union(prototypes: &[GroupPrototype], k: usize, taus: TauScales, metric: Metric) -> Result<Hypergraph> {
    let dim = prototypes.first().map_or(0, |p| p.vector.len());
    let mut union = Hypergraph {
        vertices: Vec::new(),
        edges: Vec::new(),
        source_rows: Vec::new(),
        features: DenseMatrix::zeros(0, dim),
        taus,
    };
    let mut classes: Vec<usize> = prototypes.iter().map(|p| p.class).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut feature_rows: Vec<&[f64]> = Vec::new();
    for c in classes {
        let idx: Vec<usize> = (0..prototypes.len()).filter(|&i| prototypes[i].class == c).collect();
        let subset: Vec<GroupPrototype> = idx.iter().map(|&i| prototypes[i].clone()).collect();
        let hg = build_group(&subset, k, taus, metric)?;
        let offset = union.vertices.len();
        union.vertices.extend(hg.vertices);
        union.source_rows.extend(idx.iter().copied());
        union.edges.extend(hg.edges.into_iter().map(|e| Hyperedge {
            anchor: e.anchor + offset,
            members: e.members.iter().map(|m| m + offset).collect(),
            scale: e.scale,
        }));
        feature_rows.extend(idx.iter().map(|&i| prototypes[i].vector.as_slice()));
    }
    if !feature_rows.is_empty() {
        union.features = DenseMatrix::from_rows(&feature_rows);
    }
    Ok(union)
}
