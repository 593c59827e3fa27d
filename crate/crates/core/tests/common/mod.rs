#![allow(dead_code)]

use vibefuse::fem::*;

/// A 0.4 m cantilever strip, 8×2×1 elements, six segments along x,
/// tip-loaded in z.
pub fn strip_config() -> ModelConfig {
    let mut g = GeometryConfig::single_panel([0.4, 0.1, 0.02], [8, 2, 1]);
    g.fixed = vec![HalfSpace::Below { axis: Axis::X, value: 0.0 }];
    g.allow_free_free = false;
    g.segments = (0..6)
        .map(|i| {
            let x0 = 0.4 * i as f64 / 6.0;
            Region {
                min: [x0, -1.0, -1.0],
                max: [x0 + 0.4 / 6.0, 1.0, 1.0],
            }
        })
        .collect();
    ModelConfig {
        geometry: g,
        material: MaterialSpec::default(),
        loads: LoadConfig {
            forces: vec![PointForce {
                point: [0.4, 0.1, 0.02],
                direction: Axis::Z,
                amplitude: 1.0,
            }],
            outputs: vec![PointDof {
                point: [0.4, 0.0, 0.0],
                direction: Axis::Z,
            }],
        },
        frequency: FrequencyGrid {
            start_hz: 80.0,
            stop_hz: 140.0,
            points: 10,
        },
        modes: 5,
    }
}
