//! Per-segment assembly and realization of `M(θ)`, `C(θ)`, `K(θ)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::hex8::{element_matrices, isotropic_elasticity};
use super::mesh::{MeshModel, SEGMENT_COUNT};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparsePattern};

/// Number of uncertain parameters: (δρ, δE) per segment.
pub const PARAM_COUNT: usize = 2 * SEGMENT_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub density: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Mass-proportional damping coefficient (1/s).
    pub a_m: f64,
    /// Stiffness-proportional damping coefficient (s).
    pub a_k: f64,
}

impl Default for MaterialSpec {
    /// Structural steel with light proportional damping.
    fn default() -> Self {
        Self {
            density: 7.85e3,
            youngs_modulus: 206e9,
            poisson_ratio: 0.3,
            a_m: 0.01,
            a_k: 1e-4,
        }
    }
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) || !(self.youngs_modulus > 0.0) {
            return Err(Error::Domain("density and Young's modulus must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::Domain("Poisson ratio must lie in [0, 0.5)".into()));
        }
        if !(self.a_m >= 0.0 && self.a_k >= 0.0) {
            return Err(Error::Domain("damping coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

/// Relative deviations ordered `[δρ_1, δE_1, δρ_2, δE_2, …]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertainInput(pub [f64; PARAM_COUNT]);

impl UncertainInput {
    pub fn nominal() -> Self {
        Self([0.0; PARAM_COUNT])
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; PARAM_COUNT] = v
            .try_into()
            .map_err(|_| Error::Shape(format!("θ needs {PARAM_COUNT} entries, got {}", v.len())))?;
        Ok(Self(arr))
    }

    pub fn density_deviation(&self, segment: usize) -> f64 {
        self.0[2 * segment]
    }

    pub fn modulus_deviation(&self, segment: usize) -> f64 {
        self.0[2 * segment + 1]
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..SEGMENT_COUNT {
            if !(1.0 + self.density_deviation(s) > 0.0) || !(1.0 + self.modulus_deviation(s) > 0.0) {
                return Err(Error::Domain(format!(
                    "segment {s}: realized density or modulus is not positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SegmentedSystem {
    pub mass_blocks: Vec<CsrMatrix>,
    pub stiffness_blocks: Vec<CsrMatrix>,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub material: MaterialSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionalDamping {
    pub a_m: f64,
    pub a_k: f64,
}

#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub mass: CsrMatrix,
    pub damping: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub theta: Option<UncertainInput>,
    pub proportional: Option<ProportionalDamping>,
}

impl SystemMatrices {
    /// Builds a system from small dense matrices (used for unit-scale checks).
    pub fn from_dense(m: &DMatrix<f64>, c: &DMatrix<f64>, k: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut entries = vec![];
        for a in [m, c, k] {
            for i in 0..n {
                for j in 0..n {
                    if a[(i, j)] != 0.0 {
                        entries.push((i, j));
                    }
                }
            }
        }
        for i in 0..n {
            entries.push((i, i));
        }
        let pattern = Arc::new(SparsePattern::from_entries(n, entries));
        let fill = |a: &DMatrix<f64>| {
            let mut s = CsrMatrix::zeros(pattern.clone());
            for i in 0..n {
                for j in 0..n {
                    if a[(i, j)] != 0.0 {
                        s.add(i, j, a[(i, j)]);
                    }
                }
            }
            s
        };
        Self {
            mass: fill(m),
            damping: fill(c),
            stiffness: fill(k),
            theta: None,
            proportional: None,
        }
    }

    /// `C = a_M·M + a_K·K` from dense mass and stiffness.
    pub fn proportional_from_dense(m: &DMatrix<f64>, k: &DMatrix<f64>, a_m: f64, a_k: f64) -> Self {
        let c = m * a_m + k * a_k;
        let mut s = Self::from_dense(m, &c, k);
        s.proportional = Some(ProportionalDamping { a_m, a_k });
        s
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }
}

/// Assembles per-segment mass and stiffness blocks on one shared pattern.
///
/// Blocks are integrated once at nominal material; the nominal assemblies are
/// the in-order sums of the blocks.
pub fn assemble_segments(mesh: &MeshModel, material: &MaterialSpec) -> Result<SegmentedSystem> {
    material.validate()?;
    let n = mesh.free_dofs;
    let element_dofs: Vec<Vec<(usize, usize)>> = mesh
        .elements
        .iter()
        .map(|conn| {
            let mut v = Vec::with_capacity(24);
            for (a, &node) in conn.iter().enumerate() {
                for d in 0..3 {
                    if let Some(g) = mesh.dof_map[node][d] {
                        v.push((3 * a + d, g));
                    }
                }
            }
            v
        })
        .collect();

    let pattern = Arc::new(SparsePattern::from_entries(
        n,
        element_dofs
            .iter()
            .flat_map(|dofs| dofs.iter().flat_map(move |&(_, gi)| dofs.iter().map(move |&(_, gj)| (gi, gj)))),
    ));

    let d = isotropic_elasticity(material.youngs_modulus, material.poisson_ratio);
    let mut mass_blocks: Vec<CsrMatrix> = (0..SEGMENT_COUNT).map(|_| CsrMatrix::zeros(pattern.clone())).collect();
    let mut stiffness_blocks = mass_blocks.clone();
    for (e, conn) in mesh.elements.iter().enumerate() {
        let coords: [[f64; 3]; 8] = std::array::from_fn(|a| mesh.nodes[conn[a]]);
        let (ke, me) = element_matrices(&coords, &d, material.density, e)?;
        let s = mesh.element_segment[e];
        for &(li, gi) in &element_dofs[e] {
            for &(lj, gj) in &element_dofs[e] {
                stiffness_blocks[s].add(gi, gj, ke[(li, lj)]);
                mass_blocks[s].add(gi, gj, me[(li, lj)]);
            }
        }
    }
    let ones: Vec<(f64, &CsrMatrix)> = mass_blocks.iter().map(|m| (1.0, m)).collect();
    let mass = CsrMatrix::linear_combination(&ones)?;
    let ones: Vec<(f64, &CsrMatrix)> = stiffness_blocks.iter().map(|m| (1.0, m)).collect();
    let stiffness = CsrMatrix::linear_combination(&ones)?;
    Ok(SegmentedSystem {
        mass_blocks,
        stiffness_blocks,
        mass,
        stiffness,
        material: *material,
    })
}

/// `M(θ) = Σ (1+δρ_s) M_s`, `K(θ) = Σ (1+δE_s) K_s`, `C = a_M M + a_K K`.
pub fn realize_system(sys: &SegmentedSystem, theta: &UncertainInput) -> Result<SystemMatrices> {
    theta.validate()?;
    let mass_terms: Vec<(f64, &CsrMatrix)> = sys
        .mass_blocks
        .iter()
        .enumerate()
        .map(|(s, m)| (1.0 + theta.density_deviation(s), m))
        .collect();
    let stiff_terms: Vec<(f64, &CsrMatrix)> = sys
        .stiffness_blocks
        .iter()
        .enumerate()
        .map(|(s, k)| (1.0 + theta.modulus_deviation(s), k))
        .collect();
    let mass = CsrMatrix::linear_combination(&mass_terms)?;
    let stiffness = CsrMatrix::linear_combination(&stiff_terms)?;
    let (a_m, a_k) = (sys.material.a_m, sys.material.a_k);
    let damping = CsrMatrix::linear_combination(&[(a_m, &mass), (a_k, &stiffness)])?;
    Ok(SystemMatrices {
        mass,
        damping,
        stiffness,
        theta: Some(*theta),
        proportional: Some(ProportionalDamping { a_m, a_k }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{build_mesh, GeometryConfig};

    fn unit_material() -> MaterialSpec {
        MaterialSpec {
            density: 2.0,
            youngs_modulus: 1.0,
            poisson_ratio: 0.0,
            a_m: 0.01,
            a_k: 1e-4,
        }
    }

    #[test]
    fn one_element_mass_sums_to_rho_v() {
        let mesh = build_mesh(&GeometryConfig::single_panel([2.0, 1.0, 0.5], [1, 1, 1])).unwrap();
        let sys = assemble_segments(&mesh, &unit_material()).unwrap();
        let dense = sys.mass.to_dense();
        for d in 0..3 {
            let mut s = 0.0;
            for a in 0..8 {
                for b in 0..8 {
                    s += dense[(3 * a + d, 3 * b + d)];
                }
            }
            assert!((s - 2.0 * 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn realization_is_linear_in_blocks() {
        let mesh = build_mesh(&GeometryConfig::single_panel([2.0, 1.0, 1.0], [2, 1, 1])).unwrap();
        let sys = assemble_segments(&mesh, &unit_material()).unwrap();
        let nominal = realize_system(&sys, &UncertainInput::nominal()).unwrap();
        assert_eq!(nominal.mass.values(), sys.mass.values());
        assert_eq!(nominal.stiffness.values(), sys.stiffness.values());

        let mut theta = UncertainInput::nominal();
        theta.0[2 * 2 + 1] = 0.1;
        let r = realize_system(&sys, &theta).unwrap();
        let expect =
            CsrMatrix::linear_combination(&[(1.0, &sys.stiffness), (0.1, &sys.stiffness_blocks[2])]).unwrap();
        for (a, b) in r.stiffness.values().iter().zip(expect.values()) {
            assert!((a - b).abs() <= 1e-15 * sys.stiffness.max_abs());
        }
    }

    #[test]
    fn damping_is_proportional() {
        let mesh = build_mesh(&GeometryConfig::single_element()).unwrap();
        let sys = assemble_segments(&mesh, &MaterialSpec::default()).unwrap();
        let mut theta = UncertainInput::nominal();
        theta.0[0] = 0.05;
        theta.0[1] = -0.07;
        let r = realize_system(&sys, &theta).unwrap();
        for i in 0..r.dim() {
            for (j, c) in r.damping.row_entries(i) {
                let expect = 0.01 * r.mass.get(i, j) + 0.0001 * r.stiffness.get(i, j);
                assert_eq!(c, expect);
            }
        }
    }

    #[test]
    fn non_physical_sample_is_a_domain_error() {
        let mesh = build_mesh(&GeometryConfig::single_element()).unwrap();
        let sys = assemble_segments(&mesh, &MaterialSpec::default()).unwrap();
        let mut theta = UncertainInput::nominal();
        theta.0[3] = -1.0;
        assert!(matches!(realize_system(&sys, &theta), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_material_is_rejected() {
        let mut m = MaterialSpec::default();
        m.poisson_ratio = 0.5;
        assert!(m.validate().is_err());
    }
}
