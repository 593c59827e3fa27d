//! Generalized symmetric eigenproblems `K φ = λ M φ`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::skyline::{SkylineLdl, SkylineProfile};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Ascending eigenpairs; `vectors` columns are M-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Dense solve via Cholesky of `m` and a symmetric eigendecomposition.
pub fn dense_generalized(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<EigenPairs> {
    let n = k.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular mass factor".into()))?;
    let mut c = &linv * k * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lt_inv = linv.transpose();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &(&lt_inv * eig.eigenvectors.column(src)));
    }
    Ok(EigenPairs { values, vectors })
}

/// Lowest `count` eigenpairs of a large sparse pencil by subspace iteration
/// with a skyline factorization of `k` (which must be positive definite).
/// Iterates until every requested pair has residual ‖Kφ − λMφ‖/‖Kφ‖ ≤ `tol`
/// or the Ritz values are stationary to working precision.
pub fn subspace_iteration(
    k: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPairs> {
    let n = k.dim();
    if count == 0 || count > n {
        return Err(Error::Domain(format!("requested {count} modes of a system of order {n}")));
    }
    let q = n.min((2 * count).max(count + 8));
    let profile = Arc::new(SkylineProfile::new(&[k.pattern()]));
    let kf = SkylineLdl::<f64>::factor(profile, &[(1.0, k)])?;
    if !kf.is_positive_definite() {
        return Err(Error::Domain("stiffness matrix is not positive definite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e19e);
    let mut x = DMatrix::from_fn(n, q, |_, _| rng.random::<f64>() - 0.5);
    let diag_m = m.diagonal();
    for i in 0..n {
        x[(i, 0)] = diag_m[i];
    }

    let mut prev = vec![f64::INFINITY; count];
    let mut stalled = 0;
    for _ in 0..max_iter {
        let y = m.mul_dense(&x);
        let xb = kf.solve_dense(&y);
        let kr = xb.transpose() * &y;
        let mr = xb.transpose() * m.mul_dense(&xb);
        let kr = (&kr + kr.transpose()) * 0.5;
        let mr = (&mr + mr.transpose()) * 0.5;
        let small = dense_generalized(&kr, &mr)?;
        x = &xb * &small.vectors;
        let values = &small.values[..count];
        let settled = values.iter().zip(&prev).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs());
        stalled = if settled { stalled + 1 } else { 0 };
        prev.copy_from_slice(values);
        // the residual floor is set by roundoff in K·φ; stop once eigenvalues stop moving
        let converged = stalled >= 5
            || (0..count).all(|i| residual(k, m, values[i], x.column(i).as_slice()) <= tol);
        if converged {
            return Ok(EigenPairs {
                values: prev,
                vectors: x.columns(0, count).into_owned(),
            });
        }
    }
    Err(Error::Domain(format!(
        "subspace iteration did not converge in {max_iter} iterations"
    )))
}

/// ‖Kφ − λMφ‖ / ‖Kφ‖ for one pair.
pub fn residual(k: &CsrMatrix, m: &CsrMatrix, lambda: f64, phi: &[f64]) -> f64 {
    let kp = k.mul_vec(phi);
    let mp = m.mul_vec(phi);
    let num: f64 = kp
        .iter()
        .zip(&mp)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = kp.iter().map(|a| a * a).sum::<f64>().sqrt();
    num / den
}
