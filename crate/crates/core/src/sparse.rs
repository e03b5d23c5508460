//! Compressed sparse row matrices with the handful of products the
//! propagation and predictor code needs.

use ndarray::Array2;

use crate::error::{Error, Result};

/// CSR matrix over f64. Column indices are sorted within each row and
/// duplicates are merged at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from (row, col, value) triplets. Duplicate coordinates are
    /// summed; explicit zeros are kept.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] = indices.len();
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] = indptr[r + 1].max(indptr[r]);
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    fn check_rhs(&self, rhs: &Array2<f64>, transposed: bool) -> Result<()> {
        let need = if transposed { self.n_rows } else { self.n_cols };
        if rhs.nrows() != need {
            return Err(Error::ShapeMismatch(format!(
                "csr {}x{} (transposed={}) times dense {}x{}",
                self.n_rows,
                self.n_cols,
                transposed,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        Ok(())
    }

    /// self * rhs
    pub fn matmul(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_rhs(rhs, false)?;
        let mut out = Array2::zeros((self.n_rows, rhs.ncols()));
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for k in 0..rhs.ncols() {
                    out[[i, k]] += v * rhs[[j, k]];
                }
            }
        }
        Ok(out)
    }

    /// selfᵀ * rhs
    pub fn matmul_transposed(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_rhs(rhs, true)?;
        let mut out = Array2::zeros((self.n_cols, rhs.ncols()));
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for k in 0..rhs.ncols() {
                    out[[j, k]] += v * rhs[[i, k]];
                }
            }
        }
        Ok(out)
    }

    /// (self ∘ mask) * rhs, where mask holds one multiplier per stored nonzero.
    pub fn matmul_masked(&self, rhs: &Array2<f64>, mask: &[f64]) -> Result<Array2<f64>> {
        self.check_rhs(rhs, false)?;
        assert_eq!(mask.len(), self.nnz());
        let mut out = Array2::zeros((self.n_rows, rhs.ncols()));
        for i in 0..self.n_rows {
            for idx in self.indptr[i]..self.indptr[i + 1] {
                let v = self.values[idx] * mask[idx];
                if v == 0.0 {
                    continue;
                }
                let j = self.indices[idx];
                for k in 0..rhs.ncols() {
                    out[[i, k]] += v * rhs[[j, k]];
                }
            }
        }
        Ok(out)
    }

    /// (self ∘ mask)ᵀ * rhs
    pub fn matmul_masked_transposed(&self, rhs: &Array2<f64>, mask: &[f64]) -> Result<Array2<f64>> {
        self.check_rhs(rhs, true)?;
        assert_eq!(mask.len(), self.nnz());
        let mut out = Array2::zeros((self.n_cols, rhs.ncols()));
        for i in 0..self.n_rows {
            for idx in self.indptr[i]..self.indptr[i + 1] {
                let v = self.values[idx] * mask[idx];
                if v == 0.0 {
                    continue;
                }
                let j = self.indices[idx];
                for k in 0..rhs.ncols() {
                    out[[j, k]] += v * rhs[[i, k]];
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[[i, j]] += v;
            }
        }
        out
    }

    /// Scales every nonzero row to sum 1 (L1 row normalization). Zero rows
    /// are left untouched, as are rows already summing to 1 within 1e-12 —
    /// that guard makes the operation an exact fixed point, so normalized
    /// data round-trips through save/load unchanged.
    pub fn l1_normalize_rows(&mut self) {
        for i in 0..self.n_rows {
            let sum: f64 = self.values[self.indptr[i]..self.indptr[i + 1]].iter().sum();
            if sum != 0.0 && (sum - 1.0).abs() > 1e-12 {
                for idx in self.indptr[i]..self.indptr[i + 1] {
                    self.values[idx] /= sum;
                }
            }
        }
    }

    /// Scales every stored value in row i by factors[i].
    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.n_rows);
        for i in 0..self.n_rows {
            for idx in self.indptr[i]..self.indptr[i + 1] {
                self.values[idx] *= factors[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_merge_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5), (1, 0, 3.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row(1).0, &[0, 2]);
    }

    #[test]
    fn empty_rows_have_valid_offsets() {
        let m = CsrMatrix::from_triplets(4, 4, &[(2, 1, 1.0)]);
        assert_eq!(m.indptr, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let y = m.matmul(&x).unwrap();
        assert_eq!(y, array![[11.0, 14.0], [-3.0, -4.0]]);
    }

    #[test]
    fn transposed_matmul_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]);
        let g = array![[1.0], [2.0]];
        let y = m.matmul_transposed(&g).unwrap();
        assert_eq!(y, array![[1.0], [-2.0], [2.0]]);
    }

    #[test]
    fn masked_matmul_zeroes_entries() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let x = array![[1.0], [10.0]];
        let y = m.matmul_masked(&x, &[1.0, 0.0, 2.0]).unwrap();
        assert_eq!(y, array![[1.0], [2.0]]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]);
        let x = Array2::zeros((2, 2));
        assert!(m.matmul(&x).is_err());
    }
}
