//! Multi-panel hexahedral meshing with node merging and clamped-node selection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of material segments; the uncertain input carries two deviations per segment.
pub const SEGMENT_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Rectangular block meshed with a regular grid of hexahedra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub origin: [f64; 3],
    pub extents: [f64; 3],
    pub elements: [usize; 3],
}

/// Closed half-space `coord <= value` (`below`) or `coord >= value` (`above`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum HalfSpace {
    Below { axis: Axis, value: f64 },
    Above { axis: Axis, value: f64 },
}

impl HalfSpace {
    pub fn contains(&self, p: &[f64; 3], tol: f64) -> bool {
        match *self {
            HalfSpace::Below { axis, value } => p[axis.index()] <= value + tol,
            HalfSpace::Above { axis, value } => p[axis.index()] >= value - tol,
        }
    }
}

/// Axis-aligned box assigning elements (by centroid) to a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub panels: Vec<Panel>,
    #[serde(default = "default_merge_tolerance")]
    pub merge_tolerance: f64,
    #[serde(default)]
    pub fixed: Vec<HalfSpace>,
    pub segments: Vec<Region>,
    #[serde(default)]
    pub allow_free_free: bool,
}

fn default_merge_tolerance() -> f64 {
    1e-6
}

impl GeometryConfig {
    /// One unit hexahedron, unconstrained; every element in segment 0.
    pub fn single_element() -> Self {
        Self::single_panel([1.0, 1.0, 1.0], [1, 1, 1])
    }

    /// One free-free panel with all elements in the first segment.
    pub fn single_panel(extents: [f64; 3], elements: [usize; 3]) -> Self {
        let mut segments = vec![Region {
            min: [f64::NEG_INFINITY; 3],
            max: [f64::INFINITY; 3],
        }];
        segments.extend((1..SEGMENT_COUNT).map(|_| Region {
            min: [f64::INFINITY; 3],
            max: [f64::INFINITY; 3],
        }));
        Self {
            panels: vec![Panel {
                origin: [0.0; 3],
                extents,
                elements,
            }],
            merge_tolerance: 1e-9,
            fixed: vec![],
            segments,
            allow_free_free: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.panels.is_empty() {
            return Err(Error::Geometry("no panels".into()));
        }
        for (i, p) in self.panels.iter().enumerate() {
            if p.elements.iter().any(|&n| n == 0) {
                return Err(Error::Geometry(format!("panel {i} has a zero element count")));
            }
            if p.extents.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::Geometry(format!("panel {i} has a non-positive extent")));
            }
        }
        if self.segments.len() != SEGMENT_COUNT {
            return Err(Error::Geometry(format!(
                "expected {SEGMENT_COUNT} segment regions, got {}",
                self.segments.len()
            )));
        }
        if !(self.merge_tolerance > 0.0) {
            return Err(Error::Geometry("merge tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MeshModel {
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
    pub element_segment: Vec<usize>,
    pub fixed: Vec<bool>,
    /// Free DOF index per node and direction; `None` for clamped nodes.
    pub dof_map: Vec<[Option<usize>; 3]>,
    pub free_dofs: usize,
}

impl MeshModel {
    pub fn free_node_count(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }

    /// Nearest node to `p`.
    pub fn nearest_node(&self, p: &[f64; 3]) -> usize {
        let d2 = |q: &[f64; 3]| (0..3).map(|k| (q[k] - p[k]).powi(2)).sum::<f64>();
        (0..self.nodes.len())
            .min_by(|&a, &b| d2(&self.nodes[a]).total_cmp(&d2(&self.nodes[b])))
            .expect("mesh has nodes")
    }

    /// Free DOF at the node nearest `p` in direction `axis`.
    pub fn dof_at(&self, p: &[f64; 3], axis: Axis) -> Result<usize> {
        let node = self.nearest_node(p);
        self.dof_map[node][axis.index()].ok_or_else(|| {
            Error::Geometry(format!("node {node} nearest to {p:?} is clamped"))
        })
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        for &n in &self.elements[e] {
            for k in 0..3 {
                c[k] += self.nodes[n][k] / 8.0;
            }
        }
        c
    }
}

struct NodeMerger {
    tol: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    nodes: Vec<[f64; 3]>,
}

impl NodeMerger {
    fn key(&self, p: &[f64; 3]) -> [i64; 3] {
        let h = 2.0 * self.tol;
        [
            (p[0] / h).floor() as i64,
            (p[1] / h).floor() as i64,
            (p[2] / h).floor() as i64,
        ]
    }

    fn insert(&mut self, p: [f64; 3]) -> usize {
        let k = self.key(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &id in list {
                            let q = self.nodes[id];
                            let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
                            if d <= self.tol {
                                return id;
                            }
                        }
                    }
                }
            }
        }
        let id = self.nodes.len();
        self.nodes.push(p);
        self.cells.entry(k).or_default().push(id);
        id
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Meshes every panel, merges coincident nodes, assigns segments and
/// numbers the DOFs of unclamped nodes (three translations each).
pub fn build_mesh(config: &GeometryConfig) -> Result<MeshModel> {
    config.validate()?;
    let mut merger = NodeMerger {
        tol: config.merge_tolerance,
        cells: HashMap::new(),
        nodes: Vec::new(),
    };
    let mut elements = Vec::new();
    for panel in &config.panels {
        let [nx, ny, nz] = panel.elements;
        let mut ids = vec![0usize; (nx + 1) * (ny + 1) * (nz + 1)];
        let at = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    let p = [
                        panel.origin[0] + panel.extents[0] * i as f64 / nx as f64,
                        panel.origin[1] + panel.extents[1] * j as f64 / ny as f64,
                        panel.origin[2] + panel.extents[2] * k as f64 / nz as f64,
                    ];
                    ids[at(i, j, k)] = merger.insert(p);
                }
            }
        }
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    elements.push([
                        ids[at(i, j, k)],
                        ids[at(i + 1, j, k)],
                        ids[at(i + 1, j + 1, k)],
                        ids[at(i, j + 1, k)],
                        ids[at(i, j, k + 1)],
                        ids[at(i + 1, j, k + 1)],
                        ids[at(i + 1, j + 1, k + 1)],
                        ids[at(i, j + 1, k + 1)],
                    ]);
                }
            }
        }
    }
    let nodes = merger.nodes;

    for (e, conn) in elements.iter().enumerate() {
        let mut s = conn.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.len() != 8 {
            return Err(Error::Geometry(format!("element {e} has repeated nodes")));
        }
    }

    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    for conn in &elements {
        for w in conn.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let root = find(&mut parent, 0);
    if (0..nodes.len()).any(|i| find(&mut parent, i) != root) {
        return Err(Error::Geometry("panels do not form a connected mesh".into()));
    }

    let mut mesh = MeshModel {
        nodes,
        elements,
        element_segment: Vec::new(),
        fixed: Vec::new(),
        dof_map: Vec::new(),
        free_dofs: 0,
    };

    let mut segs = Vec::with_capacity(mesh.elements.len());
    for e in 0..mesh.elements.len() {
        let c = mesh.element_centroid(e);
        let hits: Vec<usize> = (0..SEGMENT_COUNT)
            .filter(|&s| config.segments[s].contains(&c))
            .collect();
        match hits.as_slice() {
            [s] => segs.push(*s),
            [] => return Err(Error::Geometry(format!("element {e} at {c:?} lies in no segment"))),
            _ => {
                return Err(Error::Geometry(format!(
                    "element {e} at {c:?} lies in segments {hits:?}"
                )))
            }
        }
    }
    mesh.element_segment = segs;

    mesh.fixed = mesh
        .nodes
        .iter()
        .map(|p| config.fixed.iter().any(|h| h.contains(p, config.merge_tolerance)))
        .collect();
    if !mesh.fixed.iter().any(|f| *f) && !config.allow_free_free {
        return Err(Error::Geometry(
            "no clamped nodes; set allow_free_free for an unconstrained model".into(),
        ));
    }
    let mut next = 0;
    mesh.dof_map = mesh
        .fixed
        .iter()
        .map(|&f| {
            if f {
                [None; 3]
            } else {
                let d = [Some(next), Some(next + 1), Some(next + 2)];
                next += 3;
                d
            }
        })
        .collect();
    mesh.free_dofs = next;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hexahedron() {
        let m = build_mesh(&GeometryConfig::single_element()).unwrap();
        assert_eq!(m.nodes.len(), 8);
        assert_eq!(m.free_dofs, 24);
    }

    #[test]
    fn two_elements_share_a_face() {
        let m = build_mesh(&GeometryConfig::single_panel([2.0, 1.0, 1.0], [2, 1, 1])).unwrap();
        assert_eq!(m.nodes.len(), 12);
        assert_eq!(m.free_dofs, 36);
    }

    #[test]
    fn adjacent_panels_merge_their_interface() {
        let mut cfg = GeometryConfig::single_panel([1.0, 1.0, 0.1], [2, 2, 1]);
        cfg.panels.push(Panel {
            origin: [1.0, 0.0, 0.0],
            extents: [1.0, 1.0, 0.1],
            elements: [2, 2, 1],
        });
        let m = build_mesh(&cfg).unwrap();
        // 2 × 18 nodes minus the 6 on the shared face
        assert_eq!(m.nodes.len(), 30);
    }

    #[test]
    fn disconnected_panels_are_rejected() {
        let mut cfg = GeometryConfig::single_element();
        cfg.panels.push(Panel {
            origin: [5.0, 0.0, 0.0],
            extents: [1.0, 1.0, 1.0],
            elements: [1, 1, 1],
        });
        assert!(matches!(build_mesh(&cfg), Err(Error::Geometry(_))));
    }

    #[test]
    fn clamping_removes_dofs() {
        let mut cfg = GeometryConfig::single_panel([2.0, 1.0, 1.0], [2, 1, 1]);
        cfg.fixed.push(HalfSpace::Below {
            axis: Axis::X,
            value: 0.0,
        });
        let m = build_mesh(&cfg).unwrap();
        assert_eq!(m.free_node_count(), 8);
        assert_eq!(m.free_dofs, 24);
        assert!(m.dof_at(&[0.0, 0.0, 0.0], Axis::Z).is_err());
    }

    #[test]
    fn unconstrained_model_needs_opt_in() {
        let mut cfg = GeometryConfig::single_element();
        cfg.allow_free_free = false;
        assert!(build_mesh(&cfg).is_err());
    }

    #[test]
    fn segment_regions_must_be_six_and_cover_elements() {
        let mut cfg = GeometryConfig::single_element();
        cfg.segments.pop();
        assert!(build_mesh(&cfg).is_err());
        let mut cfg = GeometryConfig::single_element();
        cfg.segments[0].max = [0.1; 3];
        assert!(build_mesh(&cfg).is_err());
    }
}
