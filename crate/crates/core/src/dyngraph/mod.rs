//! Discrete dynamic graphs over a fixed node universe.
//!
//! Every snapshot covers the same `n` nodes; nodes that do not exist in a
//! slice are marked absent by the presence mask instead of being re-indexed.

mod format;
mod sbm;

pub use format::{
    load_dataset, parse_dataset, parse_edges, parse_features, parse_labels, parse_meta,
    parse_presence, render_dataset, write_dataset, DatasetMeta, LoadOptions, RawDataset,
    RawSlice, DEFAULT_DEGREE_BUCKETS,
};
pub use sbm::{generate_sbm, SbmParams};

use std::fmt;

use crate::error::{Error, Result};
use crate::numcore::{DenseMatrix, SparseMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotGraph {
    pub t: usize,
    /// Symmetric 0/1 adjacency, `n x n`.
    pub adjacency: SparseMatrix,
    /// Node attributes, `n x d`.
    pub features: DenseMatrix,
    /// Class per node; `None` where unknown.
    pub labels: Vec<Option<usize>>,
    pub presence: Vec<bool>,
}

impl SnapshotGraph {
    /// Builds a snapshot from an undirected edge list. Duplicate edges (in
    /// either orientation) collapse to one.
    pub fn from_edges(
        t: usize,
        edges: &[(usize, usize)],
        features: DenseMatrix,
        labels: Vec<Option<usize>>,
        presence: Vec<bool>,
    ) -> Result<Self> {
        let n = presence.len();
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        let mut seen = std::collections::BTreeSet::new();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Schema(format!(
                    "slice {t}: edge ({u}, {v}) outside node universe of {n}"
                )));
            }
            if u == v {
                continue;
            }
            if seen.insert((u.min(v), u.max(v))) {
                triplets.push((u, v, 1.0));
                triplets.push((v, u, 1.0));
            }
        }
        let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;
        let snap = Self {
            t,
            adjacency,
            features,
            labels,
            presence,
        };
        snap.validate()?;
        Ok(snap)
    }

    pub fn num_nodes(&self) -> usize {
        self.presence.len()
    }

    pub fn num_present(&self) -> usize {
        self.presence.iter().filter(|&&p| p).count()
    }

    /// Undirected edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .triplets()
            .filter(|&(u, v, _)| u < v)
            .map(|(u, v, _)| (u, v))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .map(|i| self.adjacency.row(i).0.len())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        let t = self.t;
        if self.adjacency.shape() != (n, n) {
            return Err(Error::Schema(format!(
                "slice {t}: adjacency is {:?}, expected {n}x{n}",
                self.adjacency.shape()
            )));
        }
        if self.features.rows() != n || self.labels.len() != n {
            return Err(Error::Schema(format!(
                "slice {t}: {} feature rows and {} labels for {n} nodes",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if !self.features.is_finite() {
            return Err(Error::Schema(format!("slice {t}: non-finite feature value")));
        }
        if !self.adjacency.is_symmetric() {
            return Err(Error::Schema(format!("slice {t}: adjacency is not symmetric")));
        }
        for (u, v, w) in self.adjacency.triplets() {
            if w < 0.0 {
                return Err(Error::Schema(format!("slice {t}: negative edge weight")));
            }
            if !self.presence[u] || !self.presence[v] {
                return Err(Error::Schema(format!(
                    "slice {t}: edge ({u}, {v}) touches an absent node"
                )));
            }
        }
        Ok(())
    }
}

/// Table-2 style dataset summary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetStats {
    pub nodes: usize,
    /// Undirected edges summed over slices.
    pub edges: usize,
    pub time_steps: usize,
    pub classes: usize,
    pub attributes: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "nodes={} edges={} time_steps={} classes={} attributes={}",
            self.nodes, self.edges, self.time_steps, self.classes, self.attributes
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicGraph {
    snapshots: Vec<SnapshotGraph>,
    n: usize,
    d: usize,
    classes: usize,
}

impl DynamicGraph {
    pub fn new(snapshots: Vec<SnapshotGraph>, n: usize, d: usize, classes: usize) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Schema("a dynamic graph needs at least one slice".into()));
        }
        if classes == 0 {
            return Err(Error::Schema("class count must be positive".into()));
        }
        for (idx, s) in snapshots.iter().enumerate() {
            if s.t != idx {
                return Err(Error::Schema(format!(
                    "slice at position {idx} carries index {}",
                    s.t
                )));
            }
            if s.num_nodes() != n || s.features.cols() != d {
                return Err(Error::Schema(format!(
                    "slice {idx} has {} nodes x {} attributes, expected {n} x {d}",
                    s.num_nodes(),
                    s.features.cols()
                )));
            }
            s.validate()?;
            if let Some(bad) = s.labels.iter().flatten().find(|&&c| c >= classes) {
                return Err(Error::Schema(format!(
                    "slice {idx}: label {bad} outside [0, {classes})"
                )));
            }
        }
        Ok(Self {
            snapshots,
            n,
            d,
            classes,
        })
    }

    pub fn snapshots(&self) -> &[SnapshotGraph] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: usize) -> &SnapshotGraph {
        &self.snapshots[t]
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn num_slices(&self) -> usize {
        self.snapshots.len()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            nodes: self.n,
            edges: self.snapshots.iter().map(SnapshotGraph::num_edges).sum(),
            time_steps: self.num_slices(),
            classes: self.classes,
            attributes: self.d,
        }
    }

    /// `labels[t][i]`, for every slice.
    pub fn label_matrix(&self) -> Vec<Vec<Option<usize>>> {
        self.snapshots.iter().map(|s| s.labels.clone()).collect()
    }

    /// A copy with every label in `slices` replaced by `None`.
    pub fn with_labels_masked(&self, slices: impl IntoIterator<Item = usize>) -> DynamicGraph {
        let mut g = self.clone();
        for t in slices {
            g.snapshots[t].labels.iter_mut().for_each(|l| *l = None);
        }
        g
    }

    /// A copy with the slices reordered: output slice `k` is input slice
    /// `order[k]`, re-indexed to `k`.
    pub fn permute_slices(&self, order: &[usize]) -> Result<DynamicGraph> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.num_slices()).collect::<Vec<_>>() {
            return Err(Error::param("order", "not a permutation of the slices"));
        }
        let snapshots = order
            .iter()
            .enumerate()
            .map(|(k, &src)| SnapshotGraph {
                t: k,
                ..self.snapshots[src].clone()
            })
            .collect();
        DynamicGraph::new(snapshots, self.n, self.d, self.classes)
    }
}

/// Train slices `0..=train_end`, test slices `train_end+1..num_slices`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    train_end: usize,
    num_slices: usize,
}

impl SplitSpec {
    pub fn train_slices(&self) -> std::ops::Range<usize> {
        0..self.train_end + 1
    }

    pub fn test_slices(&self) -> std::ops::Range<usize> {
        self.train_end + 1..self.num_slices
    }

    pub fn train_end(&self) -> usize {
        self.train_end
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn is_train(&self, t: usize) -> bool {
        t <= self.train_end
    }
}

/// Splits at slice `t`: train `[0, t]`, test `(t, T)`. Both ranges must be
/// nonempty, so `t ≤ T − 2`.
pub fn split(g: &DynamicGraph, t: usize) -> Result<SplitSpec> {
    let slices = g.num_slices();
    if slices < 2 || t + 2 > slices {
        return Err(Error::param(
            "split-t",
            format!("{t} leaves no test slice among {slices} slices (need t <= T-2)"),
        ));
    }
    Ok(SplitSpec {
        train_end: t,
        num_slices: slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(slices: usize) -> DynamicGraph {
        let snaps = (0..slices)
            .map(|t| {
                SnapshotGraph::from_edges(
                    t,
                    &[(0, 1)],
                    DenseMatrix::zeros(3, 2),
                    vec![Some(0), Some(1), None],
                    vec![true; 3],
                )
                .unwrap()
            })
            .collect();
        DynamicGraph::new(snaps, 3, 2, 2).unwrap()
    }

    #[test]
    fn split_ranges() {
        let g = tiny(10);
        let s = split(&g, 7).unwrap();
        assert_eq!(s.train_slices(), 0..8);
        assert_eq!(s.test_slices(), 8..10);

        let s = split(&tiny(2), 0).unwrap();
        assert_eq!(s.train_slices(), 0..1);
        assert_eq!(s.test_slices(), 1..2);

        assert_eq!(split(&tiny(11), 8).unwrap().test_slices().len(), 2);
    }

    #[test]
    fn split_rejects_empty_test_range() {
        assert!(split(&tiny(2), 1).is_err());
        assert!(split(&tiny(10), 9).is_err());
        assert!(split(&tiny(1), 0).is_err());
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let s = SnapshotGraph::from_edges(
            0,
            &[(0, 1), (1, 0), (0, 1), (1, 2)],
            DenseMatrix::zeros(3, 1),
            vec![None; 3],
            vec![true; 3],
        )
        .unwrap();
        assert_eq!(s.edges(), vec![(0, 1), (1, 2)]);
        assert!(s.adjacency.is_symmetric());
    }

    #[test]
    fn edge_to_absent_node_rejected() {
        let err = SnapshotGraph::from_edges(
            0,
            &[(0, 1)],
            DenseMatrix::zeros(2, 1),
            vec![None; 2],
            vec![true, false],
        );
        assert!(matches!(err, Err(Error::Schema(_))));
    }

    #[test]
    fn label_out_of_range_rejected() {
        let s = SnapshotGraph::from_edges(
            0,
            &[],
            DenseMatrix::zeros(1, 1),
            vec![Some(3)],
            vec![true],
        )
        .unwrap();
        assert!(DynamicGraph::new(vec![s], 1, 1, 3).is_err());
    }

    #[test]
    fn masking_clears_only_requested_slices() {
        let g = tiny(3).with_labels_masked([2]);
        assert_eq!(g.snapshot(1).labels[0], Some(0));
        assert!(g.snapshot(2).labels.iter().all(Option::is_none));
    }
}
