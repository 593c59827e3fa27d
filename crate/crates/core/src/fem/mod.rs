//! Full-order solid-element model: meshing, segmented assembly, harmonic
//! response and modal analysis.

pub mod frf;
pub mod hex8;
pub mod mesh;
pub mod system;

use serde::{Deserialize, Serialize};

pub use frf::{linear_grid, natural_frequencies, solve_full_frf, static_solve, FrfRequest};
pub use mesh::{build_mesh, Axis, GeometryConfig, HalfSpace, MeshModel, Panel, Region, SEGMENT_COUNT};
pub use system::{
    assemble_segments, realize_system, MaterialSpec, SegmentedSystem, SystemMatrices, UncertainInput,
    PARAM_COUNT,
};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointForce {
    pub point: [f64; 3],
    pub direction: Axis,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDof {
    pub point: [f64; 3],
    pub direction: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub forces: Vec<PointForce>,
    pub outputs: Vec<PointDof>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGrid {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            start_hz: 120.0,
            stop_hz: 170.0,
            points: 10,
        }
    }
}

impl FrequencyGrid {
    pub fn values(&self) -> Vec<f64> {
        linear_grid(self.start_hz, self.stop_hz, self.points)
    }
}

/// The `model` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub material: MaterialSpec,
    pub loads: LoadConfig,
    #[serde(default)]
    pub frequency: FrequencyGrid,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_modes() -> usize {
    5
}

/// Mesh, segment blocks and the resolved harmonic request of one model.
#[derive(Debug, Clone)]
pub struct FemModel {
    pub mesh: MeshModel,
    pub system: SegmentedSystem,
    pub request: FrfRequest,
}

impl FemModel {
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        let mesh = build_mesh(&cfg.geometry)?;
        let system = assemble_segments(&mesh, &cfg.material)?;
        let forces = cfg
            .loads
            .forces
            .iter()
            .map(|f| Ok((mesh.dof_at(&f.point, f.direction)?, f.amplitude)))
            .collect::<Result<Vec<_>>>()?;
        let outputs = cfg
            .loads
            .outputs
            .iter()
            .map(|o| mesh.dof_at(&o.point, o.direction))
            .collect::<Result<Vec<_>>>()?;
        let request = FrfRequest {
            forces,
            freqs_hz: cfg.frequency.values(),
            outputs,
        };
        request.validate(mesh.free_dofs)?;
        Ok(Self { mesh, system, request })
    }

    pub fn dofs(&self) -> usize {
        self.mesh.free_dofs
    }
}
