use std::sync::Arc;

use dynhyper::backbone::EmbeddingTable;
use dynhyper::dyngraph::{generate_sbm, parse_dataset, render_dataset, LoadOptions, SbmParams};
use dynhyper::hyperbuild::{build_individual, knn_temporal, Hyperedge, Hypergraph, Metric, Scale, TauScales, VertexId};
use dynhyper::hyperprop::{
    attention_aggregate, gaussian_weight, hgnn_spectral_layer, incidence, pair_weights, propagate, sigma_bandwidth,
    HgnnParams, PropMode,
};
use dynhyper::numcore::{softmax_in_place, DenseMatrix, SparseMatrix, Tape};
use dynhyper::trainer::{binary_auc, total_loss};
use proptest::prelude::*;

fn table(n: usize, slices: usize, dim: usize, values: &[i32], absent: &[bool]) -> EmbeddingTable {
    let z = DenseMatrix::from_vec(n * slices, dim, values.iter().map(|&v| v as f64).collect()).unwrap();
    let presence = (0..slices).map(|t| (0..n).map(|i| !absent[t * n + i]).collect()).collect();
    EmbeddingTable::new(z, presence).unwrap()
}

/// Small integer-valued tables: exact distances and plenty of ties.
fn small_table() -> impl Strategy<Value = EmbeddingTable> {
    (1usize..8, 1usize..5, 1usize..3).prop_flat_map(|(n, t, d)| {
        (
            proptest::collection::vec(-2i32..3, n * t * d),
            proptest::collection::vec(proptest::bool::weighted(0.15), n * t),
        )
            .prop_map(move |(v, a)| table(n, t, d, &v, &a))
    })
}

/// Sort everything, then cut.
fn knn_oracle(tbl: &EmbeddingTable, anchor: (usize, usize), k: usize, tau: usize, metric: Metric) -> Vec<(usize, usize)> {
    let (a, ta) = anchor;
    let mut all = Vec::new();
    for t in 0..tbl.num_slices() {
        for i in 0..tbl.num_nodes() {
            let gap = t.abs_diff(ta);
            if tbl.is_present(i, t) && gap > 0 && gap <= tau {
                all.push((metric.distance(tbl.get(a, ta), tbl.get(i, t)), gap, t, i));
            }
        }
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2, x.3).cmp(&(y.1, y.2, y.3))));
    all.into_iter().take(k).map(|(_, _, t, i)| (i, t)).collect()
}

fn random_hypergraph() -> impl Strategy<Value = (Hypergraph, DenseMatrix)> {
    (1usize..12, 1usize..4).prop_flat_map(|(nv, dim)| {
        let edges = proptest::collection::vec(
            (0..nv, proptest::collection::vec(0..nv, 0..4)),
            0..6,
        );
        let z = proptest::collection::vec(-3.0f64..3.0, nv * dim);
        (edges, z).prop_map(move |(edges, z)| {
            // One vertex per slice so any distinct pair is a legal co-member.
            let vertices: Vec<VertexId> = (0..nv).map(|t| VertexId::Node { node: 0, slice: t }).collect();
            let edges: Vec<Hyperedge> = edges
                .into_iter()
                .map(|(anchor, others)| {
                    let mut members = vec![anchor];
                    for m in others {
                        if !members.contains(&m) {
                            members.push(m);
                        }
                    }
                    Hyperedge { anchor, members, scale: Scale::Long }
                })
                .collect();
            let features = DenseMatrix::from_vec(nv, dim, z).unwrap();
            let hg = Hypergraph {
                vertices,
                edges,
                source_rows: (0..nv).collect(),
                features: features.clone(),
                taus: TauScales::new(nv, nv, nv).unwrap(),
            };
            (hg, features)
        })
    })
}

fn dense_spectral(hg: &Hypergraph, w: &[f64], z: &DenseMatrix, theta: &DenseMatrix) -> DenseMatrix {
    let (nv, ne) = (hg.num_vertices(), hg.num_edges());
    let mut h = DenseMatrix::zeros(nv, ne);
    for (e, edge) in hg.edges.iter().enumerate() {
        for &m in &edge.members {
            h.set(m, e, 1.0);
        }
    }
    let mut p = DenseMatrix::zeros(nv, nv);
    for v in 0..nv {
        let dv: f64 = (0..ne).map(|e| h.get(v, e) * w[e]).sum();
        for u in 0..nv {
            let du: f64 = (0..ne).map(|e| h.get(u, e) * w[e]).sum();
            if dv == 0.0 || du == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for e in 0..ne {
                let de: f64 = (0..nv).map(|x| h.get(x, e)).sum();
                s += h.get(v, e) * w[e] * h.get(u, e) / de;
            }
            p.set(v, u, s / (dv.sqrt() * du.sqrt()));
        }
        if dv == 0.0 {
            p.set(v, v, 1.0);
        }
    }
    p.matmul(z).unwrap().matmul(theta).unwrap().relu()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn knn_matches_exhaustive_sort(tbl in small_table(), k in 0usize..5, tau in 0usize..5, m in 0usize..3) {
        let metric = [Metric::Euclidean, Metric::Cosine, Metric::Chebyshev][m];
        for t in 0..tbl.num_slices() {
            for i in 0..tbl.num_nodes() {
                if tbl.is_present(i, t) {
                    prop_assert_eq!(
                        knn_temporal(&tbl, (i, t), k, tau, metric).unwrap(),
                        knn_oracle(&tbl, (i, t), k, tau, metric)
                    );
                }
            }
        }
    }

    #[test]
    fn knn_ignores_rescaling(tbl in small_table(), k in 1usize..4, power in -2i32..3) {
        // Powers of two keep every distance exact, ties included.
        let factor = 2f64.powi(power);
        let scaled = EmbeddingTable::new(tbl.stacked().scale(factor), tbl.presence().to_vec()).unwrap();
        let taus = TauScales::defaults_for(tbl.num_slices());
        let a = build_individual(&tbl, k, taus, Metric::Chebyshev).unwrap();
        let b = build_individual(&scaled, k, taus, Metric::Chebyshev).unwrap();
        prop_assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn individual_hypergraph_invariants(tbl in small_table(), k in 0usize..4) {
        let taus = TauScales::defaults_for(tbl.num_slices());
        let hg = build_individual(&tbl, k, taus, Metric::Euclidean).unwrap();
        hg.validate(k).unwrap();
        let present = tbl.presence().iter().flatten().filter(|&&p| p).count();
        prop_assert_eq!(hg.num_vertices(), present);
        prop_assert_eq!(hg.num_edges(), 3 * present);

        let inc = incidence(&hg).unwrap();
        let cols = inc.h().col_sums();
        for (e, edge) in hg.edges.iter().enumerate() {
            prop_assert_eq!(cols[e], edge.len() as f64);
            prop_assert_eq!(inc.h().get(edge.anchor, e), 1.0);
        }
        let total: f64 = inc.vertex_degrees().iter().sum();
        prop_assert_eq!(total, cols.iter().sum::<f64>());
    }

    #[test]
    fn spectral_layer_matches_dense_product((hg, z) in random_hypergraph(), seed in 0u64..1000) {
        let dim = z.cols();
        let mut rng = dynhyper::numcore::Rng::new(seed);
        let theta = rng.normal_matrix(dim, dim, 1.0);
        let w: Vec<f64> = (0..hg.num_edges()).map(|_| rng.uniform_range(0.1, 1.0)).collect();
        let inc = incidence(&hg).unwrap().with_edge_weights(w.clone()).unwrap();
        let got = hgnn_spectral_layer(&inc, &z, &theta, true).unwrap();
        prop_assert!(got.max_abs_diff(&dense_spectral(&hg, &w, &z, &theta)) <= 1e-10);
    }

    #[test]
    fn attention_is_a_distribution(
        msgs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..6),
        anchor in proptest::collection::vec(-5.0f64..5.0, 3),
    ) {
        let (out, alpha) = attention_aggregate(&msgs, &anchor).unwrap();
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(alpha.iter().all(|&a| a > 0.0));
        // The output is a convex combination: inside the per-coordinate hull.
        for c in 0..3 {
            let lo = msgs.iter().map(|m| m[c]).fold(f64::INFINITY, f64::min);
            let hi = msgs.iter().map(|m| m[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out[c] >= lo - 1e-9 && out[c] <= hi + 1e-9);
        }
    }

    #[test]
    fn softmax_ignores_constant_shift(scores in proptest::collection::vec(-20.0f64..20.0, 1..8), shift in -50.0f64..50.0) {
        let mut a = scores.clone();
        let mut b: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn gaussian_weights_are_bounded_and_monotone(d1 in 0.0f64..10.0, d2 in 0.0f64..10.0, sigma in 0.01f64..5.0) {
        let (w1, w2) = (gaussian_weight(d1, sigma), gaussian_weight(d2, sigma));
        prop_assert!((0.0..=1.0).contains(&w1));
        prop_assert_eq!(gaussian_weight(0.0, sigma), 1.0);
        if d1 < d2 {
            prop_assert!(w1 >= w2);
        }
    }

    #[test]
    fn pair_weights_follow_distances((hg, z) in random_hypergraph()) {
        prop_assume!(hg.edges.iter().any(|e| e.len() > 1));
        let sigma = sigma_bandwidth(&hg, &z, Metric::Euclidean).unwrap();
        let table = pair_weights(&hg, &z, sigma, Metric::Euclidean).unwrap();
        for (edge, w) in hg.edges.iter().zip(&table.weights) {
            prop_assert_eq!(w.len(), edge.len() - 1);
            for (&m, &x) in edge.members[1..].iter().zip(w) {
                let d = Metric::Euclidean.distance(z.row(edge.anchor), z.row(m));
                prop_assert!(x > 0.0 || d > 30.0 * sigma);
                prop_assert!(x <= 1.0);
            }
        }
    }

    #[test]
    fn propagation_commutes_with_vertex_relabelling((hg, z) in random_hypergraph(), seed in 0u64..1000, spectral in any::<bool>()) {
        let nv = hg.num_vertices();
        let mut rng = dynhyper::numcore::Rng::new(seed);
        let mut perm: Vec<usize> = (0..nv).collect();
        for i in (1..nv).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        // Vertex v moves to position perm[v].
        let mut inverse = vec![0; nv];
        for (v, &p) in perm.iter().enumerate() {
            inverse[p] = v;
        }
        let moved = Hypergraph {
            vertices: inverse.iter().map(|&v| hg.vertices[v]).collect(),
            edges: hg
                .edges
                .iter()
                .map(|e| Hyperedge {
                    anchor: perm[e.anchor],
                    members: e.members.iter().map(|&m| perm[m]).collect(),
                    scale: e.scale,
                })
                .collect(),
            source_rows: (0..nv).collect(),
            features: z.gather_rows(&inverse).unwrap(),
            taus: hg.taus,
        };
        let params = HgnnParams::init(z.cols(), 2, &mut rng);
        let mode = if spectral { PropMode::Spectral } else { PropMode::Message };
        let a = propagate(&hg, &z, &params, Metric::Euclidean, mode).unwrap();
        let b = propagate(&moved, &moved.features, &params, Metric::Euclidean, mode).unwrap();
        prop_assert!(a.gather_rows(&inverse).unwrap().max_abs_diff(&b) <= 1e-10);
    }

    #[test]
    fn auc_counts_ordered_pairs(scores in proptest::collection::vec(0u8..5, 1..14), labels in proptest::collection::vec(any::<bool>(), 14)) {
        let scores: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        let positive = &labels[..scores.len()];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        let expected = (pairs > 0.0).then(|| wins / pairs);
        prop_assert_eq!(binary_auc(&scores, positive), expected);
    }

    #[test]
    fn total_loss_is_linear_in_its_weights(a in 0.0f64..5.0, b in 0.0f64..5.0, l1 in 0.0f64..3.0, l2 in 0.0f64..3.0, s in 0.1f64..4.0) {
        let mut tape = Tape::new();
        let x = tape.leaf(DenseMatrix::scalar(l1));
        let y = tape.leaf(DenseMatrix::scalar(l2));
        let base = total_loss(&mut tape, x, y, a, b).unwrap();
        let scaled = total_loss(&mut tape, x, y, s * a, s * b).unwrap();
        let (base, scaled) = (tape.value(base).to_scalar().unwrap(), tape.value(scaled).to_scalar().unwrap());
        prop_assert!((base - (a * l1 + b * l2)).abs() <= 1e-12);
        prop_assert!((scaled - s * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn spmm_matches_dense_product(
        entries in proptest::collection::vec((0usize..6, 0usize..5, -3.0f64..3.0), 0..20),
        d in proptest::collection::vec(-3.0f64..3.0, 10),
    ) {
        let s = SparseMatrix::from_triplets(6, 5, entries).unwrap();
        let dense = DenseMatrix::from_vec(5, 2, d).unwrap();
        let want = s.to_dense().matmul(&dense).unwrap();
        prop_assert!(s.spmm(&dense).unwrap().max_abs_diff(&want) <= 1e-12);
        let back = DenseMatrix::from_vec(6, 2, (0..12).map(|x| x as f64).collect()).unwrap();
        let want_t = s.to_dense().transpose().matmul(&back).unwrap();
        prop_assert!(s.t_spmm(&back).unwrap().max_abs_diff(&want_t) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sbm_render_parse_round_trip(seed in 0u64..1000, drift in 0.0f64..1.0) {
        let g = generate_sbm(&SbmParams::new(15, 3, 3, 0.4, 0.05, drift).with_seed(seed)).unwrap();
        let back = parse_dataset(&render_dataset(&g), LoadOptions::default()).unwrap();
        prop_assert_eq!(back, g.clone());
        for s in g.snapshots() {
            prop_assert!(s.adjacency.is_symmetric());
        }
    }

    #[test]
    fn sbm_without_drift_keeps_labels(seed in 0u64..1000) {
        let g = generate_sbm(&SbmParams::new(20, 4, 3, 0.3, 0.05, 0.0).with_seed(seed)).unwrap();
        let labels = g.label_matrix();
        prop_assert!(labels.iter().all(|l| l == &labels[0]));
    }
}

#[test]
fn segment_softmax_normalizes_each_segment() {
    let offsets = Arc::new(vec![0usize, 2, 3]);
    let mut tape = Tape::new();
    let scores = tape.leaf(DenseMatrix::from_vec(3, 1, vec![1.0, 1.0, 5.0]).unwrap());
    let alpha = tape.segment_softmax(scores, offsets).unwrap();
    assert_eq!(tape.value(alpha).as_slice(), &[0.5, 0.5, 1.0]);
}
