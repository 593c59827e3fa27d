//! Profile (skyline) LDLᵀ factorization for symmetric systems.
//!
//! Works for real symmetric matrices and for complex *symmetric* (not
//! Hermitian) dynamic-stiffness matrices `−ω²M + jωC + K`. No pivoting is
//! performed; a vanishing pivot is reported as a factorization error.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;

use super::ordering::{invert, reverse_cuthill_mckee};
use super::sparse::{CsrMatrix, SparsePattern};
use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    const ZERO: Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Symbolic envelope of a reordered symmetric matrix; reusable across values.
#[derive(Debug, Clone)]
pub struct SkylineProfile {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
}

impl SkylineProfile {
    /// Envelope of the union of `patterns` under a reverse Cuthill–McKee order
    /// of the first pattern.
    pub fn new(patterns: &[&SparsePattern]) -> Self {
        let perm = reverse_cuthill_mckee(patterns[0]);
        Self::with_permutation(patterns, perm)
    }

    pub fn with_permutation(patterns: &[&SparsePattern], perm: Vec<usize>) -> Self {
        let n = perm.len();
        let inv = invert(&perm);
        let mut first: Vec<usize> = (0..n).collect();
        for p in patterns {
            assert_eq!(p.dim(), n, "pattern dimension mismatch");
            for old_i in 0..n {
                let i = inv[old_i];
                for &old_j in p.row(old_i) {
                    let j = inv[old_j];
                    if j < i {
                        first[i] = first[i].min(j);
                    }
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        Self {
            perm,
            inv,
            first,
            start,
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries (lower envelope including the diagonal).
    pub fn envelope_size(&self) -> usize {
        *self.start.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone)]
pub struct SkylineLdl<T: Scalar> {
    profile: Arc<SkylineProfile>,
    data: Vec<T>,
}

impl<T: Scalar> SkylineLdl<T> {
    /// Factors `Σ_k c_k · A_k` where each `A_k` is a symmetric sparse matrix
    /// whose pattern is covered by `profile`.
    pub fn factor(profile: Arc<SkylineProfile>, terms: &[(T, &CsrMatrix)]) -> Result<Self> {
        let n = profile.dim();
        let mut data = vec![T::ZERO; profile.envelope_size()];
        for (c, m) in terms {
            if m.dim() != n {
                return Err(Error::Shape(format!(
                    "matrix of order {} against profile of order {n}",
                    m.dim()
                )));
            }
            for old_i in 0..n {
                let i = profile.inv[old_i];
                for (old_j, v) in m.row_entries(old_i) {
                    let j = profile.inv[old_j];
                    if j <= i {
                        if j < profile.first[i] {
                            return Err(Error::Shape("entry outside skyline envelope".into()));
                        }
                        data[profile.start[i] + j - profile.first[i]] += *c * T::from_real(v);
                    }
                }
            }
        }
        let mut f = Self { profile, data };
        f.factor_in_place()?;
        Ok(f)
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let p = &*self.profile;
        let n = p.dim();
        for i in 0..n {
            let fi = p.first[i];
            let (done, rest) = self.data.split_at_mut(p.start[i]);
            let row_i = &mut rest[..i - fi + 1];
            let diag_scale = row_i[i - fi].modulus();
            for j in fi..i {
                let fj = p.first[j];
                let k0 = fi.max(fj);
                if k0 < j {
                    let row_j = &done[p.start[j]..p.start[j] + (j - fj)];
                    let mut acc = T::ZERO;
                    for (a, b) in row_i[k0 - fi..j - fi].iter().zip(&row_j[k0 - fj..j - fj]) {
                        acc += *a * *b;
                    }
                    row_i[j - fi] -= acc;
                }
            }
            let mut d = row_i[i - fi];
            for j in fi..i {
                let dj = done[p.start[j] + (j - p.first[j])];
                let t = row_i[j - fi];
                let l = t / dj;
                d -= t * l;
                row_i[j - fi] = l;
            }
            let m = d.modulus();
            if !m.is_finite() || m <= 1e-14 * diag_scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Factorization {
                    pivot: p.perm[i],
                    reason: format!("pivot modulus {m:e} (diagonal {diag_scale:e})"),
                });
            }
            row_i[i - fi] = d;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    /// Pivots of D in factorization order.
    pub fn pivots(&self) -> impl Iterator<Item = T> + '_ {
        let p = &*self.profile;
        (0..p.dim()).map(move |i| self.data[p.start[i] + i - p.first[i]])
    }

    /// Solves `A x = b` in place; `b` is in the original (unpermuted) ordering.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let p = &*self.profile;
        let n = p.dim();
        assert_eq!(b.len(), n, "right-hand side length");
        let mut y: Vec<T> = p.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = p.first[i];
            let row = &self.data[p.start[i]..p.start[i] + (i - fi)];
            let mut acc = T::ZERO;
            for (l, yk) in row.iter().zip(&y[fi..i]) {
                acc += *l * *yk;
            }
            y[i] -= acc;
        }
        for i in 0..n {
            y[i] = y[i] / self.data[p.start[i] + i - p.first[i]];
        }
        for i in (0..n).rev() {
            let fi = p.first[i];
            let yi = y[i];
            let row = &self.data[p.start[i]..p.start[i] + (i - fi)];
            for (l, yk) in row.iter().zip(&mut y[fi..i]) {
                *yk -= *l * yi;
            }
        }
        for (new, &old) in p.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

impl SkylineLdl<f64> {
    /// True when every pivot is positive (Sylvester: the matrix is SPD).
    pub fn is_positive_definite(&self) -> bool {
        self.pivots().all(|d| d > 0.0)
    }

    /// Solves for every column of a dense right-hand side.
    pub fn solve_dense(&self, b: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        let mut x = b.clone();
        for c in 0..x.ncols() {
            let mut col = x.column_mut(c);
            self.solve_in_place(col.as_mut_slice());
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn laplacian(n: usize, shift: f64) -> CsrMatrix {
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn real_solve_matches_dense_lu() {
        let a = laplacian(7, 0.3);
        let prof = Arc::new(SkylineProfile::new(&[a.pattern()]));
        let f = SkylineLdl::<f64>::factor(prof, &[(1.0, &a)]).unwrap();
        assert!(f.is_positive_definite());
        let b: Vec<f64> = (0..7).map(|i| (i as f64).sin() + 1.0).collect();
        let x = f.solve(&b);
        let xd = a.to_dense().lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..7 {
            assert!((x[i] - xd[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_symmetric_solve() {
        let k = laplacian(5, 0.0);
        let m = CsrMatrix::from_triplets(5, &(0..5).map(|i| (i, i, 1.0)).collect::<Vec<_>>());
        let prof = Arc::new(SkylineProfile::new(&[k.pattern(), m.pattern()]));
        let w = 0.7;
        let terms = [
            (Complex64::new(1.0, 0.05 * w), &k),
            (Complex64::new(-w * w, 0.02 * w), &m),
        ];
        let f = SkylineLdl::factor(prof, &terms).unwrap();
        let b = vec![Complex64::new(1.0, 0.0); 5];
        let x = f.solve(&b);
        let mut a = DMatrix::<Complex64>::zeros(5, 5);
        for (c, mat) in terms {
            a += mat.to_dense().map(|v| Complex64::new(v, 0.0)) * c;
        }
        let r = &a * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.norm() < 1e-13);
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let prof = Arc::new(SkylineProfile::new(&[a.pattern()]));
        assert!(matches!(
            SkylineLdl::<f64>::factor(prof, &[(1.0, &a)]),
            Err(Error::Factorization { .. })
        ));
    }
}
