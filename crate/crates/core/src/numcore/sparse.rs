//! Compressed sparse row matrices.
//!
//! Sparse operands are structural constants in this crate (adjacency,
//! incidence, propagation operators), so the type is immutable once built.

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from unordered `(row, col, value)` triplets.
    /// Duplicate coordinates are summed; the result is in canonical order.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::shape(
                "from_triplets",
                format!("entry ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut triplets = Vec::new();
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), triplets).expect("indices come from m")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// All entries in canonical (row, col) order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for (&c, &v) in self.col_idx.iter().zip(&self.values) {
            sums[c] += v;
        }
        sums
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, triplets).expect("transposed indices in range")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            out.set(r, c, v);
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }

    /// `self · d`.
    pub fn spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != d.rows() {
            return Err(Error::shape(
                "spmm",
                format!(
                    "{}x{} sparse times {}x{} dense",
                    self.rows,
                    self.cols,
                    d.rows(),
                    d.cols()
                ),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, d.cols());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out_row.iter_mut().zip(d.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · d`, used for the dense-side gradient of [`spmm`](Self::spmm).
    pub fn t_spmm(&self, d: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != d.rows() {
            return Err(Error::shape(
                "t_spmm",
                format!(
                    "({}x{} sparse)ᵀ times {}x{} dense",
                    self.rows,
                    self.cols,
                    d.rows(),
                    d.cols()
                ),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, d.cols());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let src = d.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let s = SparseMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5), (0, 0, -1.0)],
        )
        .unwrap();
        let t: Vec<_> = s.triplets().collect();
        assert_eq!(t, vec![(0, 0, -1.0), (0, 1, 2.0), (1, 2, 1.5)]);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_and_empty_products() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(SparseMatrix::identity(3).spmm(&m).unwrap(), m);
        assert_eq!(
            SparseMatrix::empty(3, 3).spmm(&m).unwrap(),
            DenseMatrix::zeros(3, 2)
        );
        assert!(SparseMatrix::empty(2, 2).spmm(&m).is_err());
    }

    #[test]
    fn random_spmm_matches_dense_oracle() {
        let mut rng = Rng::new(7).substream("spmm-oracle");
        let mut triplets = Vec::new();
        for r in 0..6 {
            for c in 0..6 {
                if rng.uniform() < 0.3 {
                    triplets.push((r, c, rng.normal()));
                }
            }
        }
        let s = SparseMatrix::from_triplets(6, 6, triplets).unwrap();
        let d = rng.normal_matrix(6, 4, 1.0);
        let oracle = s.to_dense().matmul(&d).unwrap();
        assert!(s.spmm(&d).unwrap().max_abs_diff(&oracle) <= 1e-12);
        let oracle_t = s.to_dense().transpose().matmul(&d).unwrap();
        assert!(s.t_spmm(&d).unwrap().max_abs_diff(&oracle_t) <= 1e-12);
    }
}
