//! Compressed sparse row storage with a shareable sparsity pattern.
//!
//! All segment blocks of one model are assembled on the same pattern, so a
//! parameter realization is a value-wise linear combination of aligned arrays.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds a square pattern from (row, col) pairs; duplicates are merged.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in entries {
            assert!(i < n && j < n, "entry ({i}, {j}) outside {n}x{n}");
            rows[i].push(j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Storage slot of entry (i, j), if structurally present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    /// Sums duplicate triplets.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let pattern = Arc::new(SparsePattern::from_entries(
            n,
            triplets.iter().map(|&(i, j, _)| (i, j)),
        ));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    /// Keeps every structurally nonzero entry of a dense square matrix.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "matrix must be square");
        let n = a.nrows();
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &triplets)
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Panics when (i, j) is not in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in pattern"));
        self.values[k] += v;
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_range(i);
        self.pattern.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        (0..self.dim())
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Dense product `self * b`, evaluated column by column.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim());
        let mut out = DMatrix::zeros(self.dim(), b.ncols());
        for c in 0..b.ncols() {
            let col = b.column(c);
            let x = col.as_slice();
            let mut dst = out.column_mut(c);
            for i in 0..self.dim() {
                dst[i] = self.row_entries(i).map(|(j, v)| v * x[j]).sum();
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            for (j, v) in self.row_entries(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// `Σ c_k · A_k` over matrices sharing one pattern, accumulated in order.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Shape("empty linear combination".into()))?;
        let pattern = first.1.pattern.clone();
        let mut values = vec![0.0; pattern.nnz()];
        for (c, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &pattern) && *m.pattern != *pattern {
                return Err(Error::Shape("linear combination over different patterns".into()));
            }
            for (acc, v) in values.iter_mut().zip(&m.values) {
                *acc += c * v;
            }
        }
        Ok(CsrMatrix { pattern, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest |A_ij − A_ji| relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for (j, v) in self.row_entries(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// Extracts the square sub-block on `idx` (in the given order).
    pub fn principal_submatrix(&self, idx: &[usize]) -> CsrMatrix {
        let mut local = vec![usize::MAX; self.dim()];
        for (k, &g) in idx.iter().enumerate() {
            local[g] = k;
        }
        let mut triplets = Vec::new();
        for (k, &g) in idx.iter().enumerate() {
            for (j, v) in self.row_entries(g) {
                if local[j] != usize::MAX {
                    triplets.push((k, local[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(idx.len(), &triplets)
    }

    /// Dense block with rows `rows` and columns `cols`.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut local = vec![usize::MAX; self.dim()];
        for (k, &g) in cols.iter().enumerate() {
            local[g] = k;
        }
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for (r, &g) in rows.iter().enumerate() {
            for (j, v) in self.row_entries(g) {
                if local[j] != usize::MAX {
                    out[(r, local[j])] += v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_duplicates() {
        let m = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.pattern().nnz(), 2);
    }

    #[test]
    fn dense_round_trip_and_products() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let s = CsrMatrix::from_dense(&a);
        assert_eq!(s.to_dense(), a);
        assert_eq!(s.mul_vec(&[1.0, 1.0, 1.0]), vec![1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 5.0]);
        assert_eq!(s.mul_dense(&b), &a * &b);
        assert_eq!(s.asymmetry(), 0.0);
        let sub = s.principal_submatrix(&[2, 0]);
        assert_eq!(sub.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        assert_eq!(
            s.dense_block(&[1], &[0, 2]),
            DMatrix::from_row_slice(1, 2, &[-1.0, -1.0])
        );
    }

    #[test]
    fn linear_combination_requires_shared_pattern() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let b = CsrMatrix::from_triplets(2, &[(0, 1, 1.0)]);
        assert!(CsrMatrix::linear_combination(&[(1.0, &a), (1.0, &b)]).is_err());
        let c = CsrMatrix::linear_combination(&[(2.0, &a), (0.5, &a)]).unwrap();
        assert_eq!(c.get(1, 1), 2.5);
    }
}
