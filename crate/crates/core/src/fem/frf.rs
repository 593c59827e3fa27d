//! Harmonic response and modal analysis of the full-order model.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use super::system::SystemMatrices;
use crate::error::{Error, Result};
use crate::linalg::eigen::{dense_generalized, residual, subspace_iteration};
use crate::linalg::{CsrMatrix, SkylineLdl, SkylineProfile};
use crate::response::ResponseVector;

/// Systems at or below this order use the dense eigen solver.
const DENSE_EIGEN_LIMIT: usize = 300;
const FRF_RESIDUAL_TOL: f64 = 1e-10;
const MODE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FrfRequest {
    /// (DOF index, amplitude in N)
    pub forces: Vec<(usize, f64)>,
    pub freqs_hz: Vec<f64>,
    pub outputs: Vec<usize>,
}

impl FrfRequest {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.freqs_hz.is_empty() || self.outputs.is_empty() {
            return Err(Error::Domain("need at least one frequency and one output DOF".into()));
        }
        if self.freqs_hz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("frequencies must be strictly increasing".into()));
        }
        if self.freqs_hz.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Domain("frequencies must be finite and non-negative".into()));
        }
        let bad = self
            .forces
            .iter()
            .map(|f| f.0)
            .chain(self.outputs.iter().copied())
            .find(|&d| d >= n);
        if let Some(d) = bad {
            return Err(Error::Domain(format!("DOF {d} outside a system of order {n}")));
        }
        Ok(())
    }

    pub fn load_vector(&self, n: usize) -> Vec<f64> {
        let mut f = vec![0.0; n];
        for &(d, a) in &self.forces {
            f[d] += a;
        }
        f
    }

    pub fn omega(&self, r: usize) -> f64 {
        2.0 * PI * self.freqs_hz[r]
    }
}

/// `p` points uniformly spaced on `[start, stop]` (Hz).
pub fn linear_grid(start: f64, stop: f64, p: usize) -> Vec<f64> {
    if p == 1 {
        return vec![start];
    }
    (0..p)
        .map(|i| start + (stop - start) * i as f64 / (p - 1) as f64)
        .collect()
}

fn dynamic_terms(sysm: &SystemMatrices, omega: f64) -> [(Complex64, &CsrMatrix); 3] {
    [
        (Complex64::new(-omega * omega, 0.0), &sysm.mass),
        (Complex64::new(0.0, omega), &sysm.damping),
        (Complex64::new(1.0, 0.0), &sysm.stiffness),
    ]
}

fn apply(terms: &[(Complex64, &CsrMatrix)], z: &[Complex64]) -> Vec<Complex64> {
    let n = z.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (c, m) in terms {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in m.row_entries(i) {
                acc += z[j] * v;
            }
            *o += acc * *c;
        }
    }
    out
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Complex displacement amplitudes of every DOF at each requested frequency.
pub fn solve_full_frf_complex(sysm: &SystemMatrices, req: &FrfRequest) -> Result<Vec<Vec<Complex64>>> {
    let n = sysm.dim();
    req.validate(n)?;
    let profile = Arc::new(SkylineProfile::new(&[
        sysm.stiffness.pattern(),
        sysm.mass.pattern(),
        sysm.damping.pattern(),
    ]));
    let f: Vec<Complex64> = req.load_vector(n).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let fnorm = norm(&f).max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(req.freqs_hz.len());
    for r in 0..req.freqs_hz.len() {
        let terms = dynamic_terms(sysm, req.omega(r));
        let fac = SkylineLdl::factor(profile.clone(), &terms).map_err(|e| e.at_frequency(r))?;
        let mut z = fac.solve(&f);
        let mut res: Vec<Complex64> = apply(&terms, &z).iter().zip(&f).map(|(a, b)| a - b).collect();
        if norm(&res) / fnorm > FRF_RESIDUAL_TOL {
            fac.solve_in_place(&mut res);
            for (zi, di) in z.iter_mut().zip(&res) {
                *zi -= di;
            }
            res = apply(&terms, &z).iter().zip(&f).map(|(a, b)| a - b).collect();
        }
        let rel = norm(&res) / fnorm;
        if !(rel <= FRF_RESIDUAL_TOL) {
            return Err(Error::Domain(format!("solve residual {rel:e} exceeds {FRF_RESIDUAL_TOL:e}")).at_frequency(r));
        }
        out.push(z);
    }
    Ok(out)
}

/// Response magnitudes at the output DOFs for every frequency.
pub fn solve_full_frf(sysm: &SystemMatrices, req: &FrfRequest) -> Result<ResponseVector> {
    let z = solve_full_frf_complex(sysm, req)?;
    Ok(ResponseVector::from_grid(req.outputs.len(), req.freqs_hz.len(), |j, r| {
        z[r][req.outputs[j]].norm()
    }))
}

/// `K⁻¹ F`.
pub fn static_solve(stiffness: &CsrMatrix, load: &[f64]) -> Result<Vec<f64>> {
    let profile = Arc::new(SkylineProfile::new(&[stiffness.pattern()]));
    let fac = SkylineLdl::<f64>::factor(profile, &[(1.0, stiffness)])?;
    Ok(fac.solve(load))
}

/// Lowest `count` natural frequencies (Hz), ascending.
pub fn natural_frequencies(sysm: &SystemMatrices, count: usize) -> Result<Vec<f64>> {
    let n = sysm.dim();
    if count == 0 || count > n {
        return Err(Error::Domain(format!("requested {count} modes of a system of order {n}")));
    }
    let (values, vectors) = if n <= DENSE_EIGEN_LIMIT {
        let e = dense_generalized(&sysm.stiffness.to_dense(), &sysm.mass.to_dense())?;
        (e.values, e.vectors)
    } else {
        let e = subspace_iteration(&sysm.stiffness, &sysm.mass, count, 1e-10, 2000)?;
        (e.values, e.vectors)
    };
    let mut freqs = Vec::with_capacity(count);
    for i in 0..count {
        let lambda = values[i];
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("mode {i} has non-positive eigenvalue {lambda:e}")));
        }
        let r = residual(&sysm.stiffness, &sysm.mass, lambda, vectors.column(i).as_slice());
        if !(r < MODE_RESIDUAL_TOL) {
            return Err(Error::Domain(format!("mode {i} residual {r:e} exceeds {MODE_RESIDUAL_TOL:e}")));
        }
        freqs.push(lambda.sqrt() / (2.0 * PI));
    }
    Ok(freqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn sdof_undamped_closed_form() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::from_element(1, 1, 0.0);
        let s = SystemMatrices::from_dense(&one, &zero, &one);
        let omegas = [0.3, 0.7, 1.6, 2.5];
        let req = FrfRequest {
            forces: vec![(0, 1.0)],
            freqs_hz: omegas.iter().map(|w| w / (2.0 * PI)).collect(),
            outputs: vec![0],
        };
        let u = solve_full_frf(&s, &req).unwrap();
        for (r, w) in omegas.iter().enumerate() {
            let expect = 1.0 / (1.0 - w * w).abs();
            assert!((u.0[r] - expect).abs() < 1e-13 * expect);
        }
    }

    #[test]
    fn undamped_resonance_reports_frequency_index() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::from_element(1, 1, 0.0);
        let s = SystemMatrices::from_dense(&one, &zero, &one);
        let req = FrfRequest {
            forces: vec![(0, 1.0)],
            freqs_hz: vec![0.1, 1.0 / (2.0 * PI)],
            outputs: vec![0],
        };
        match solve_full_frf(&s, &req) {
            Err(Error::FrequencySolve { freq_index, .. }) => assert_eq!(freq_index, 1),
            other => panic!("expected a frequency solve error, got {other:?}"),
        }
    }

    #[test]
    fn sdof_natural_frequency() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let k = DMatrix::from_element(1, 1, 4.0 * PI * PI);
        let s = SystemMatrices::proportional_from_dense(&m, &k, 0.0, 0.0);
        let f = natural_frequencies(&s, 1).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-14);
        assert!(matches!(natural_frequencies(&s, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn request_validation() {
        let mut req = FrfRequest {
            forces: vec![(0, 1.0)],
            freqs_hz: vec![1.0, 2.0],
            outputs: vec![0],
        };
        assert!(req.validate(1).is_ok());
        req.freqs_hz = vec![2.0, 1.0];
        assert!(req.validate(1).is_err());
        req.freqs_hz = vec![1.0];
        req.outputs = vec![3];
        assert!(req.validate(2).is_err());
    }

    #[test]
    fn grid_matches_listed_points() {
        let g = linear_grid(120.0, 170.0, 10);
        let listed = [120.0, 125.56, 131.11, 136.67, 142.22, 147.78, 153.33, 158.89, 164.44, 170.0];
        for (a, b) in g.iter().zip(listed) {
            assert!((a - b).abs() < 0.006, "{a} vs {b}");
        }
    }
}
