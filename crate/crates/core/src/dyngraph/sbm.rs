//! Stochastic block model with block drift over time.

use super::{DynamicGraph, SnapshotGraph};
use crate::error::{Error, Result};
use crate::numcore::{DenseMatrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct SbmParams {
    pub n: usize,
    pub slices: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Per-slice probability that a node moves to a different block.
    pub drift_rate: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub feature_noise: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl SbmParams {
    pub const DEFAULT_FEATURE_NOISE: f64 = 1.0;
    pub const DEFAULT_FEATURE_DIM: usize = 16;

    pub fn new(n: usize, slices: usize, classes: usize, p_in: f64, p_out: f64, drift_rate: f64) -> Self {
        Self {
            n,
            slices,
            classes,
            p_in,
            p_out,
            drift_rate,
            feature_noise: Self::DEFAULT_FEATURE_NOISE,
            feature_dim: Self::DEFAULT_FEATURE_DIM,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !(prob(self.p_in) && prob(self.p_out) && self.p_out < self.p_in) {
            return Err(Error::param(
                "sbm",
                format!("need 0 <= p_out < p_in <= 1, got p_in={} p_out={}", self.p_in, self.p_out),
            ));
        }
        if !prob(self.drift_rate) {
            return Err(Error::param("drift", format!("{} outside [0, 1]", self.drift_rate)));
        }
        if self.n == 0 || self.slices == 0 || self.classes == 0 || self.feature_dim == 0 {
            return Err(Error::param("sbm", "n, T, C and feature dim must be positive"));
        }
        if !(self.feature_noise.is_finite() && self.feature_noise >= 0.0) {
            return Err(Error::param("feature_noise", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Samples a drifting SBM.
///
/// Slice 0 splits the nodes into `C` balanced blocks in random order. Each
/// later slice moves every node to a uniformly chosen *different* block with
/// probability `drift_rate`. Edges are resampled independently per slice.
/// Features are the current block's mean vector plus isotropic Gaussian
/// noise; labels are the current block.
pub fn generate_sbm(params: &SbmParams) -> Result<DynamicGraph> {
    params.validate()?;
    let SbmParams {
        n,
        slices,
        classes,
        p_in,
        p_out,
        drift_rate,
        feature_noise,
        feature_dim,
        seed,
    } = *params;
    let root = Rng::new(seed);

    let means = root.substream("class-means").normal_matrix(classes, feature_dim, 1.0);

    let mut blocks: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut order_rng = root.substream("initial-blocks");
    for i in (1..n).rev() {
        blocks.swap(i, order_rng.below(i + 1));
    }

    let mut snapshots = Vec::with_capacity(slices);
    for t in 0..slices {
        if t > 0 && classes > 1 {
            let mut drift = root.substream_indexed("drift", t as u64);
            for b in blocks.iter_mut() {
                if drift.bernoulli(drift_rate) {
                    let shift = 1 + drift.below(classes - 1);
                    *b = (*b + shift) % classes;
                }
            }
        }

        let mut edge_rng = root.substream_indexed("edges", t as u64);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if blocks[u] == blocks[v] { p_in } else { p_out };
                if edge_rng.bernoulli(p) {
                    edges.push((u, v));
                }
            }
        }

        let mut noise = root.substream_indexed("features", t as u64);
        let mut features = DenseMatrix::zeros(n, feature_dim);
        for (i, &b) in blocks.iter().enumerate() {
            for (f, &mu) in features.row_mut(i).iter_mut().zip(means.row(b)) {
                *f = mu + feature_noise * noise.normal();
            }
        }

        let labels = blocks.iter().map(|&b| Some(b)).collect();
        snapshots.push(SnapshotGraph::from_edges(t, &edges, features, labels, vec![true; n])?);
    }
    DynamicGraph::new(snapshots, n, feature_dim, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_drift_keeps_labels() {
        let g = generate_sbm(&SbmParams::new(30, 5, 3, 0.3, 0.05, 0.0).with_seed(3)).unwrap();
        let first = &g.snapshot(0).labels;
        assert!(g.snapshots().iter().all(|s| &s.labels == first));
    }

    #[test]
    fn forced_topology_is_two_cliques() {
        let g = generate_sbm(&SbmParams::new(4, 3, 2, 1.0, 0.0, 0.0).with_seed(11)).unwrap();
        for s in g.snapshots() {
            let mut expected = Vec::new();
            for u in 0..4 {
                for v in u + 1..4 {
                    if s.labels[u] == s.labels[v] {
                        expected.push((u, v));
                    }
                }
            }
            assert_eq!(s.edges(), expected);
            assert_eq!(s.num_edges(), 2, "two disjoint 2-cliques");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = SbmParams::new(40, 4, 3, 0.2, 0.02, 0.2).with_seed(9);
        assert_eq!(generate_sbm(&p).unwrap(), generate_sbm(&p).unwrap());
        assert_ne!(
            generate_sbm(&p).unwrap(),
            generate_sbm(&p.clone().with_seed(10)).unwrap()
        );
    }

    #[test]
    fn invalid_probabilities_rejected() {
        for (p_in, p_out, drift) in [(0.1, 0.1, 0.0), (0.1, 0.2, 0.0), (1.5, 0.0, 0.0), (0.5, 0.1, -0.1)] {
            let p = SbmParams::new(10, 2, 2, p_in, p_out, drift);
            assert!(matches!(generate_sbm(&p), Err(Error::Parameter { .. })), "{p:?}");
        }
    }

    #[test]
    fn drift_rate_one_changes_every_label() {
        let g = generate_sbm(&SbmParams::new(20, 3, 3, 0.2, 0.0, 1.0).with_seed(1)).unwrap();
        for t in 1..3 {
            for i in 0..20 {
                assert_ne!(g.snapshot(t).labels[i], g.snapshot(t - 1).labels[i]);
            }
        }
    }

    #[test]
    fn intra_block_density_matches_p_in() {
        let (n, slices, p_in) = (200, 8, 0.1);
        for seed in 0..5 {
            let g = generate_sbm(&SbmParams::new(n, slices, 3, p_in, 0.01, 0.1).with_seed(seed)).unwrap();
            let (mut pairs, mut hits) = (0usize, 0usize);
            for s in g.snapshots() {
                let edges: std::collections::HashSet<_> = s.edges().into_iter().collect();
                for u in 0..n {
                    for v in u + 1..n {
                        if s.labels[u] == s.labels[v] {
                            pairs += 1;
                            hits += edges.contains(&(u, v)) as usize;
                        }
                    }
                }
            }
            // Binomial(pairs, p_in) count.
            let mean = pairs as f64 * p_in;
            let sd = (pairs as f64 * p_in * (1.0 - p_in)).sqrt();
            assert!(
                (hits as f64 - mean).abs() <= 3.0 * sd,
                "seed {seed}: {hits} intra edges over {pairs} pairs"
            );
        }
    }
}
