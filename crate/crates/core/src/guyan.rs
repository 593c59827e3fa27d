//! Static (Guyan) condensation onto a master-DOF set and back-expansion of
//! the reduced harmonic response.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{solve_full_frf, FrfRequest, SystemMatrices, UncertainInput};
use crate::linalg::eigen::dense_generalized;
use crate::linalg::{CsrMatrix, SkylineLdl, SkylineProfile};
use crate::response::ResponseVector;

const FRF_RESIDUAL_TOL: f64 = 1e-10;

/// The `reduction` configuration section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    /// Number of master DOFs; defaults to 6.5% of the free DOFs.
    #[serde(default)]
    pub master_count: Option<usize>,
    /// Explicit master DOFs; overrides the automatic selection.
    #[serde(default)]
    pub masters: Option<Vec<usize>>,
}

impl ReductionConfig {
    /// 6.5% of `n`, at least twice the loaded/observed DOF count, at most `n`.
    pub fn target_count(&self, n: usize, required: usize) -> usize {
        self.master_count
            .unwrap_or_else(|| ((0.065 * n as f64).round() as usize).max(2 * required))
            .min(n)
    }
}

/// Disjoint master/slave split of the free DOFs, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofPartition {
    masters: Vec<usize>,
    slaves: Vec<usize>,
}

impl DofPartition {
    pub fn new(n: usize, masters: &[usize]) -> Result<Self> {
        let mut is_master = vec![false; n];
        for &m in masters {
            if m >= n {
                return Err(Error::Domain(format!("master DOF {m} outside a system of order {n}")));
            }
            if is_master[m] {
                return Err(Error::Domain(format!("master DOF {m} listed twice")));
            }
            is_master[m] = true;
        }
        Ok(Self::from_flags(&is_master))
    }

    pub fn all_master(n: usize) -> Self {
        Self {
            masters: (0..n).collect(),
            slaves: vec![],
        }
    }

    fn from_flags(is_master: &[bool]) -> Self {
        let (masters, slaves) = (0..is_master.len()).partition(|&i| is_master[i]);
        Self { masters, slaves }
    }

    pub fn masters(&self) -> &[usize] {
        &self.masters
    }

    pub fn slaves(&self) -> &[usize] {
        &self.slaves
    }

    pub fn dim(&self) -> usize {
        self.masters.len() + self.slaves.len()
    }

    /// Position of a DOF within the master list.
    pub fn master_index(&self, dof: usize) -> Option<usize> {
        self.masters.binary_search(&dof).ok()
    }

    pub fn slave_index(&self, dof: usize) -> Option<usize> {
        self.slaves.binary_search(&dof).ok()
    }
}

fn factor_real(a: &CsrMatrix) -> Result<SkylineLdl<f64>> {
    let profile = Arc::new(SkylineProfile::new(&[a.pattern()]));
    SkylineLdl::factor(profile, &[(1.0, a)])
}

/// Diagonals of the Guyan-reduced stiffness and mass for the current masters.
fn reduced_diagonals(sysm: &SystemMatrices, part: &DofPartition) -> Result<Vec<(f64, f64)>> {
    let k = &sysm.stiffness;
    let m = &sysm.mass;
    if part.slaves.is_empty() {
        return Ok(part.masters.iter().map(|&j| (k.get(j, j), m.get(j, j))).collect());
    }
    let kss = k.principal_submatrix(&part.slaves);
    let mss = m.principal_submatrix(&part.slaves);
    let fac = factor_real(&kss)?;
    let ns = part.slaves.len();
    Ok(part
        .masters
        .par_iter()
        .map(|&j| {
            let mut ksj = vec![0.0; ns];
            let mut msj = vec![0.0; ns];
            for (c, v) in k.row_entries(j) {
                if let Some(s) = part.slave_index(c) {
                    ksj[s] = v;
                }
            }
            for (c, v) in m.row_entries(j) {
                if let Some(s) = part.slave_index(c) {
                    msj[s] = v;
                }
            }
            // slave shape t = −K_ss⁻¹ k_sj
            let mut t = fac.solve(&ksj);
            t.iter_mut().for_each(|x| *x = -*x);
            let kr = k.get(j, j) + ksj.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>();
            let mt = mss.mul_vec(&t);
            let mr = m.get(j, j)
                + 2.0 * msj.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>()
                + t.iter().zip(&mt).map(|(a, b)| a * b).sum::<f64>();
            (kr, mr)
        })
        .collect())
}

/// Chooses `target` masters by repeatedly demoting the DOFs with the largest
/// reduced `K_ii / M_ii` ratio, half of the surplus per round, recomputing
/// the condensed diagonals between rounds. `required` DOFs are never demoted.
pub fn select_masters(sysm: &SystemMatrices, target: usize, required: &[usize]) -> Result<DofPartition> {
    let n = sysm.dim();
    let mut keep = vec![false; n];
    for &r in required {
        if r >= n {
            return Err(Error::Domain(format!("required DOF {r} outside a system of order {n}")));
        }
        keep[r] = true;
    }
    let required_count = keep.iter().filter(|k| **k).count();
    if target < required_count {
        return Err(Error::Domain(format!(
            "master count {target} is smaller than the {required_count} required DOFs"
        )));
    }
    if target > n {
        return Err(Error::Domain(format!("master count {target} exceeds the system order {n}")));
    }
    let mut is_master = vec![true; n];
    let mut count = n;
    while count > target {
        let part = DofPartition::from_flags(&is_master);
        let diag = reduced_diagonals(sysm, &part)?;
        let mut ranked: Vec<(f64, usize)> = part
            .masters
            .iter()
            .zip(&diag)
            .filter(|(j, _)| !keep[**j])
            .map(|(&j, &(kr, mr))| (kr / mr, j))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let surplus = count - target;
        let batch = surplus.div_ceil(2).min(ranked.len());
        for &(_, j) in &ranked[..batch] {
            is_master[j] = false;
        }
        count -= batch;
    }
    Ok(DofPartition::from_flags(&is_master))
}

/// Reduced matrices of one realization.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub partition: DofPartition,
    /// `−K_ss⁻¹ K_sm` (slaves × masters): the lower block of the transform.
    pub slave_map: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub theta: Option<UncertainInput>,
}

impl ReducedSystem {
    /// Full transformation `T = [I; −K_ss⁻¹K_sm]` in original DOF order.
    pub fn transform(&self) -> DMatrix<f64> {
        let p = &self.partition;
        let mut t = DMatrix::zeros(p.dim(), p.masters.len());
        for (k, &m) in p.masters.iter().enumerate() {
            t[(m, k)] = 1.0;
        }
        for (r, &s) in p.slaves.iter().enumerate() {
            t.row_mut(s).copy_from(&self.slave_map.row(r));
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.partition.masters.len()
    }
}

fn congruence(a: &CsrMatrix, t: &DMatrix<f64>) -> DMatrix<f64> {
    let r = t.transpose() * a.mul_dense(t);
    (&r + r.transpose()) * 0.5
}

/// Condenses a realization onto the partition's masters.
pub fn condense(sysm: &SystemMatrices, part: &DofPartition) -> Result<ReducedSystem> {
    if part.dim() != sysm.dim() {
        return Err(Error::Shape(format!(
            "partition of {} DOFs for a system of order {}",
            part.dim(),
            sysm.dim()
        )));
    }
    let nm = part.masters.len();
    let slave_map = if part.slaves.is_empty() {
        DMatrix::zeros(0, nm)
    } else {
        let kss = sysm.stiffness.principal_submatrix(&part.slaves);
        let fac = factor_real(&kss)?;
        let ksm = sysm.stiffness.dense_block(&part.slaves, &part.masters);
        let cols: Vec<Vec<f64>> = (0..nm)
            .into_par_iter()
            .map(|c| {
                let mut x = fac.solve(ksm.column(c).as_slice());
                x.iter_mut().for_each(|v| *v = -*v);
                x
            })
            .collect();
        DMatrix::from_fn(part.slaves.len(), nm, |r, c| cols[c][r])
    };
    let mut red = ReducedSystem {
        partition: part.clone(),
        slave_map,
        mass: DMatrix::zeros(0, 0),
        damping: DMatrix::zeros(0, 0),
        stiffness: DMatrix::zeros(0, 0),
        theta: sysm.theta,
    };
    let t = red.transform();
    red.mass = congruence(&sysm.mass, &t);
    red.damping = congruence(&sysm.damping, &t);
    red.stiffness = congruence(&sysm.stiffness, &t);
    Ok(red)
}

/// Complex master amplitudes `Z_m` at each frequency.
pub fn solve_reduced_frf(red: &ReducedSystem, req: &FrfRequest) -> Result<Vec<DVector<Complex64>>> {
    req.validate(red.partition.dim())?;
    let nm = red.dim();
    let mut f = DVector::<Complex64>::zeros(nm);
    for &(dof, amp) in &req.forces {
        let k = red.partition.master_index(dof).ok_or_else(|| {
            Error::Domain(format!("forced DOF {dof} is not a master DOF"))
        })?;
        f[k] += Complex64::new(amp, 0.0);
    }
    let fnorm = f.norm().max(f64::MIN_POSITIVE);
    let cplx = |a: &DMatrix<f64>| a.map(|v| Complex64::new(v, 0.0));
    let (m, c, k) = (cplx(&red.mass), cplx(&red.damping), cplx(&red.stiffness));
    let mut out = Vec::with_capacity(req.freqs_hz.len());
    for r in 0..req.freqs_hz.len() {
        let w = req.omega(r);
        let a = &k + &c * Complex64::new(0.0, w) - &m * Complex64::new(w * w, 0.0);
        let z = a
            .clone()
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Domain("singular reduced dynamic stiffness".into()).at_frequency(r))?;
        let rel = (&a * &z - &f).norm() / fnorm;
        if !(rel <= FRF_RESIDUAL_TOL) {
            return Err(Error::Domain(format!("reduced solve residual {rel:e}")).at_frequency(r));
        }
        out.push(z);
    }
    Ok(out)
}

/// Recovers magnitudes at `outputs` (original DOF numbering) from `Z_m`.
pub fn expand_response(
    red: &ReducedSystem,
    z_m: &[DVector<Complex64>],
    outputs: &[usize],
) -> Result<ResponseVector> {
    let nm = red.dim();
    if let Some(z) = z_m.iter().find(|z| z.len() != nm) {
        return Err(Error::Shape(format!("master response of length {} for {nm} masters", z.len())));
    }
    enum Source {
        Master(usize),
        Slave(usize),
    }
    let sources = outputs
        .iter()
        .map(|&d| {
            if let Some(k) = red.partition.master_index(d) {
                Ok(Source::Master(k))
            } else if let Some(s) = red.partition.slave_index(d) {
                Ok(Source::Slave(s))
            } else {
                Err(Error::Domain(format!("output DOF {d} outside the partition")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseVector::from_grid(outputs.len(), z_m.len(), |j, r| match sources[j] {
        Source::Master(k) => z_m[r][k].norm(),
        Source::Slave(s) => {
            let row = red.slave_map.row(s);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..nm {
                acc += z_m[r][k] * row[k];
            }
            acc.norm()
        }
    }))
}

/// Reduce, solve and expand in one call. With no slaves the reduced model is
/// the full model, so the sparse full-order solver is used directly.
pub fn guyan_frf(sysm: &SystemMatrices, part: &DofPartition, req: &FrfRequest) -> Result<ResponseVector> {
    if part.slaves.is_empty() && part.dim() == sysm.dim() {
        return solve_full_frf(sysm, req);
    }
    let red = condense(sysm, part)?;
    let z = solve_reduced_frf(&red, req)?;
    expand_response(&red, &z, &req.outputs)
}

/// Lowest `count` natural frequencies (Hz) of the reduced model.
pub fn reduced_natural_frequencies(red: &ReducedSystem, count: usize) -> Result<Vec<f64>> {
    if count == 0 || count > red.dim() {
        return Err(Error::Domain(format!("requested {count} modes of a reduced model of order {}", red.dim())));
    }
    let e = dense_generalized(&red.stiffness, &red.mass)?;
    e.values[..count]
        .iter()
        .map(|&l| {
            if l > 0.0 {
                Ok(l.sqrt() / (2.0 * PI))
            } else {
                Err(Error::Domain(format!("non-positive reduced eigenvalue {l:e}")))
            }
        })
        .collect()
}
