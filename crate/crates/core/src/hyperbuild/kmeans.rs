//! Lloyd's k-means with k-means++ seeding.

use crate::error::{Error, Result};
use crate::numcore::{DenseMatrix, Rng};

pub const KMEANS_MAX_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// `M_effective x dim`.
    pub centroids: DenseMatrix,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn num_clusters(&self) -> usize {
        self.centroids.rows()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &DenseMatrix) -> usize {
    let mut rows: Vec<&[f64]> = (0..points.rows()).map(|r| points.row(r)).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.dedup();
    rows.len()
}

fn nearest(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Clusters the rows of `points` into `min(m, #distinct rows)` groups.
pub fn kmeans(points: &DenseMatrix, m: usize, rng: &mut Rng) -> Result<KMeansResult> {
    if points.rows() == 0 {
        return Err(Error::Contract("k-means over zero points".into()));
    }
    if m == 0 {
        return Err(Error::param("m-clusters", "must be at least 1"));
    }
    let n = points.rows();
    let k = m.min(distinct_count(points));

    // k-means++ seeding. Points already chosen (and their duplicates) have
    // zero weight, so the centers are distinct.
    let mut chosen = vec![rng.below(n)];
    let mut weight: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = weight.iter().sum();
        let mut target = rng.uniform() * total;
        let mut pick = n - 1;
        for (i, &w) in weight.iter().enumerate() {
            if w > 0.0 {
                pick = i;
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        chosen.push(pick);
        for (i, w) in weight.iter_mut().enumerate() {
            *w = w.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    let mut centroids = points.gather_rows(&chosen)?;

    let mut assignments: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids).0).collect();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERS {
        iterations += 1;
        let mut sums = DenseMatrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centroid.
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(points.row(i), &centroids).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(assignments[i])))
        .sum();
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}
