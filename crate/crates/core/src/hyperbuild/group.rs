use std::fmt;
use std::str::FromStr;

use super::kmeans;
use crate::backbone::EmbeddingTable;
use crate::error::{Error, Result};
use crate::numcore::{DenseMatrix, Rng};

/// How the embeddings of one cluster are reduced to a prototype.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Avg,
    Max,
    Min,
}

impl Aggregation {
    /// Reduces the given rows column by column.
    pub fn reduce(self, rows: &[&[f64]]) -> Vec<f64> {
        let dim = rows.first().map_or(0, |r| r.len());
        (0..dim)
            .map(|c| {
                let col = rows.iter().map(|r| r[c]);
                match self {
                    Aggregation::Avg => col.sum::<f64>() / rows.len() as f64,
                    Aggregation::Max => col.fold(f64::NEG_INFINITY, f64::max),
                    Aggregation::Min => col.fold(f64::INFINITY, f64::min),
                }
            })
            .collect()
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Aggregation::Avg),
            "max" => Ok(Aggregation::Max),
            "min" => Ok(Aggregation::Min),
            other => Err(Error::param("agg", format!("unknown aggregation `{other}`"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Avg => "avg",
            Aggregation::Max => "max",
            Aggregation::Min => "min",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupPrototype {
    pub class: usize,
    pub cluster: usize,
    pub slice: usize,
    /// Embedding-table rows aggregated into this prototype.
    pub members: Vec<usize>,
    pub vector: Vec<f64>,
}

/// Clusters the present, labelled embeddings of every `(class, slice)` pair
/// into at most `m` groups and aggregates each group.
///
/// `labels[t][i]` is the label of node `i` in slice `t` of `table`. Output is
/// ordered by class, then slice, then cluster. Pairs with no members emit
/// nothing.
pub fn group_prototypes(
    table: &EmbeddingTable,
    labels: &[Vec<Option<usize>>],
    classes: usize,
    m: usize,
    agg: Aggregation,
    rng: &Rng,
) -> Result<Vec<GroupPrototype>> {
    if labels.len() != table.num_slices() {
        return Err(Error::shape(
            "group prototypes",
            format!("{} label slices for {} embedding slices", labels.len(), table.num_slices()),
        ));
    }
    if m == 0 {
        return Err(Error::param("m-clusters", "must be at least 1"));
    }
    let mut out = Vec::new();
    for class in 0..classes {
        for (slice, row_labels) in labels.iter().enumerate() {
            if row_labels.len() != table.num_nodes() {
                return Err(Error::shape("group prototypes", format!("slice {slice} has {} labels", row_labels.len())));
            }
            let rows: Vec<usize> = (0..table.num_nodes())
                .filter(|&i| table.is_present(i, slice) && row_labels[i] == Some(class))
                .map(|i| table.row_index(i, slice))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let points = table.stacked().gather_rows(&rows)?;
            let mut krng = rng.substream(&format!("kmeans/{class}/{slice}"));
            let fit = kmeans(&points, m, &mut krng)?;
            for cluster in 0..fit.num_clusters() {
                let local: Vec<usize> = (0..rows.len()).filter(|&p| fit.assignments[p] == cluster).collect();
                if local.is_empty() {
                    continue;
                }
                let vecs: Vec<&[f64]> = local.iter().map(|&p| points.row(p)).collect();
                out.push(GroupPrototype {
                    class,
                    cluster,
                    slice,
                    members: local.iter().map(|&p| rows[p]).collect(),
                    vector: agg.reduce(&vecs),
                });
            }
        }
    }
    Ok(out)
}

/// Stacks prototype vectors into a matrix, one row per prototype.
pub fn prototype_matrix(prototypes: &[GroupPrototype]) -> DenseMatrix {
    let rows: Vec<&[f64]> = prototypes.iter().map(|p| p.vector.as_slice()).collect();
    DenseMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[f64; 2]], n: usize, slices: usize) -> EmbeddingTable {
        EmbeddingTable::new(DenseMatrix::from_rows(rows), vec![vec![true; n]; slices]).unwrap()
    }

    #[test]
    fn elementwise_aggregations() {
        let rows: [&[f64]; 2] = [&[1.0, 5.0], &[3.0, 2.0]];
        assert_eq!(Aggregation::Max.reduce(&rows), vec![3.0, 5.0]);
        assert_eq!(Aggregation::Min.reduce(&rows), vec![1.0, 2.0]);
        assert_eq!(Aggregation::Avg.reduce(&rows), vec![2.0, 3.5]);
        assert!(matches!("median".parse::<Aggregation>(), Err(Error::Parameter { name: "agg", .. })));
    }

    #[test]
    fn one_cluster_gives_class_mean_per_slice() {
        // 3 nodes, 2 slices; slice-major rows.
        let t = table(&[[0.0, 0.0], [2.0, 2.0], [9.0, 9.0], [1.0, 1.0], [3.0, 5.0], [7.0, 7.0]], 3, 2);
        let labels = vec![vec![Some(0), Some(0), Some(1)], vec![Some(0), Some(0), None]];
        let p = group_prototypes(&t, &labels, 2, 1, Aggregation::Avg, &Rng::new(0)).unwrap();
        let got: Vec<_> = p.iter().map(|p| (p.class, p.slice, p.vector.clone())).collect();
        assert_eq!(
            got,
            vec![(0, 0, vec![1.0, 1.0]), (0, 1, vec![2.0, 3.0]), (1, 0, vec![9.0, 9.0])]
        );
    }

    /// Minimum-inertia partition into exactly `m` non-empty groups, by
    /// enumerating every assignment.
    fn best_partition(points: &[[f64; 2]], m: usize) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
        for code in 0..m.pow(n as u32) {
            let mut groups = vec![Vec::new(); m];
            let mut c = code;
            for i in 0..n {
                groups[c % m].push(i);
                c /= m;
            }
            if groups.iter().any(|g| g.is_empty()) {
                continue;
            }
            let cost: f64 = groups
                .iter()
                .map(|g| {
                    let rows: Vec<&[f64]> = g.iter().map(|&i| points[i].as_slice()).collect();
                    let mu = Aggregation::Avg.reduce(&rows);
                    rows.iter()
                        .map(|r| r.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                        .sum::<f64>()
                })
                .sum();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, groups));
            }
        }
        let mut groups = best.unwrap().1;
        groups.sort();
        groups
    }

    #[test]
    fn matches_exhaustive_grouping() {
        // 4 nodes x 2 slices, 2 classes; each (class, slice) holds two
        // well-separated pairs or fewer points.
        let rows = [
            [0.0, 0.0],
            [0.2, 0.1],
            [5.0, 5.0],
            [5.1, 4.8],
            [1.0, -1.0],
            [-3.0, 2.0],
            [-3.2, 2.1],
            [8.0, 0.0],
        ];
        let t = table(&rows, 4, 2);
        let labels = vec![
            vec![Some(0), Some(0), Some(0), Some(0)],
            vec![Some(1), Some(0), Some(0), Some(1)],
        ];
        let m = 2;
        let got = group_prototypes(&t, &labels, 2, m, Aggregation::Avg, &Rng::new(5)).unwrap();

        let mut expected = Vec::new();
        for class in 0..2 {
            for slice in 0..2 {
                let members: Vec<usize> = (0..4)
                    .filter(|&i| labels[slice][i] == Some(class))
                    .map(|i| slice * 4 + i)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let pts: Vec<[f64; 2]> = members.iter().map(|&r| rows[r]).collect();
                for g in best_partition(&pts, m.min(pts.len())) {
                    let vecs: Vec<&[f64]> = g.iter().map(|&i| pts[i].as_slice()).collect();
                    expected.push((class, slice, g.iter().map(|&i| members[i]).collect::<Vec<_>>(), Aggregation::Avg.reduce(&vecs)));
                }
            }
        }
        let mut got: Vec<_> = got.into_iter().map(|p| (p.class, p.slice, p.members, p.vector)).collect();
        got.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
        expected.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
        assert_eq!(got, expected);
    }

    #[test]
    fn absent_vertices_are_skipped() {
        let t = EmbeddingTable::new(DenseMatrix::from_rows(&[[1.0], [3.0]]), vec![vec![true, false]]).unwrap();
        let p = group_prototypes(&t, &[vec![Some(0), Some(0)]], 1, 3, Aggregation::Max, &Rng::new(0)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].vector, vec![1.0]);
        assert_eq!(p[0].members, vec![0]);
    }
}
