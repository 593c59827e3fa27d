use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vibefuse::fem::*;
use vibefuse::guyan::*;

const A_M: f64 = 0.01;
const A_K: f64 = 1e-3;

fn chain4() -> SystemMatrices {
    let k = DMatrix::from_row_slice(
        4,
        4,
        &[2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 1.0],
    );
    SystemMatrices::proportional_from_dense(&DMatrix::identity(4, 4), &k, A_M, A_K)
}

// Hand reduction of the fixed-free chain onto DOFs {1, 3}:
// K_ss = 2I, K_sm = [[-1, 0], [-1, -1]], X = [[1/2, 0], [1/2, 1/2]].
fn hand_kr() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 0.5])
}

fn hand_mr() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.5, 0.25, 0.25, 1.25])
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn chain_reduction_matches_hand_values() {
    let s = chain4();
    let part = DofPartition::new(4, &[1, 3]).unwrap();
    let red = condense(&s, &part).unwrap();
    assert!(rel(&red.stiffness, &hand_kr()) < 1e-12);
    assert!(rel(&red.mass, &hand_mr()) < 1e-12);
    let cr = hand_mr() * A_M + hand_kr() * A_K;
    assert!(rel(&red.damping, &cr) < 1e-12);
    let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.5, 0.5]);
    assert!(rel(&red.slave_map, &x) < 1e-12);
}

#[test]
fn chain_frf_matches_two_by_two_oracle() {
    let s = chain4();
    let part = DofPartition::new(4, &[1, 3]).unwrap();
    let red = condense(&s, &part).unwrap();
    let w = 0.5;
    let req = FrfRequest {
        forces: vec![(3, 1.0)],
        freqs_hz: vec![w / (2.0 * std::f64::consts::PI)],
        outputs: vec![0, 1, 2, 3],
    };
    let z = solve_reduced_frf(&red, &req).unwrap();

    // Cramer's rule on A = K_r + jωC_r − ω²M_r with f = [0, 1]
    let (kr, mr) = (hand_kr(), hand_mr());
    let a = |i: usize, j: usize| {
        Complex64::new(kr[(i, j)] - w * w * mr[(i, j)], w * (A_M * mr[(i, j)] + A_K * kr[(i, j)]))
    };
    let det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    let z1 = -a(0, 1) / det;
    let z3 = a(0, 0) / det;
    assert!((z[0][0] - z1).norm() < 1e-12 * z1.norm());
    assert!((z[0][1] - z3).norm() < 1e-12 * z3.norm());

    // slave recovery: z0 = z1/2, z2 = (z1 + z3)/2
    let u = expand_response(&red, &z, &req.outputs).unwrap();
    let expect = [(z1 * 0.5).norm(), z1.norm(), ((z1 + z3) * 0.5).norm(), z3.norm()];
    for (got, want) in u.as_slice().iter().zip(expect) {
        assert!((got - want).abs() < 1e-12 * want);
    }
}

#[test]
fn schur_complement_and_symmetry() {
    let s = chain4();
    let part = DofPartition::new(4, &[0, 3]).unwrap();
    let red = condense(&s, &part).unwrap();
    let k = s.stiffness.to_dense();
    let kmm = k.select_rows(&[0, 3]).select_columns(&[0, 3]);
    let kms = k.select_rows(&[0, 3]).select_columns(&[1, 2]);
    let kss = k.select_rows(&[1, 2]).select_columns(&[1, 2]);
    let schur = &kmm - &kms * kss.try_inverse().unwrap() * kms.transpose();
    assert!(rel(&red.stiffness, &schur) < 1e-10);
    for m in [&red.mass, &red.damping, &red.stiffness] {
        assert!(rel(m, &m.transpose()) < 1e-12);
    }
}

fn small_plate() -> (FemModel, SegmentedSystem) {
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
    let cfg = ModelConfig {
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
        frequency: FrequencyGrid::default(),
        modes: 5,
    };
    let model = FemModel::build(&cfg).unwrap();
    let sys = model.system.clone();
    (model, sys)
}

#[test]
fn static_condensation_is_exact_for_master_loads() {
    let (model, sys) = small_plate();
    let n = model.dofs();
    let required: Vec<usize> = model.request.forces.iter().map(|f| f.0).collect();
    let nominal = realize_system(&sys, &UncertainInput::nominal()).unwrap();
    let part = select_masters(&nominal, 20, &required).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let theta: Vec<f64> = (0..PARAM_COUNT).map(|_| rng.random_range(-0.2..0.2)).collect();
        let s = realize_system(&sys, &UncertainInput::from_slice(&theta).unwrap()).unwrap();
        let red = condense(&s, &part).unwrap();
        let mut load = vec![0.0; n];
        let mut fm = DVector::zeros(part.masters().len());
        for (k, &m) in part.masters().iter().enumerate() {
            let v = rng.random_range(-1.0..1.0);
            load[m] = v;
            fm[k] = v;
        }
        let full = static_solve(&s.stiffness, &load).unwrap();
        let zm = red.stiffness.clone().lu().solve(&fm).unwrap();
        let expanded = red.transform() * zm;
        let err = (DVector::from_vec(full.clone()) - &expanded).norm() / DVector::from_vec(full).norm();
        assert!(err < 1e-9, "relative error {err:e}");
    }
}

#[test]
fn all_master_frf_equals_full_frf() {
    let s = chain4();
    let req = FrfRequest {
        forces: vec![(3, 1.0), (1, -0.5)],
        freqs_hz: vec![0.02, 0.05, 0.1, 0.2],
        outputs: vec![0, 1, 2, 3],
    };
    let full = solve_full_frf(&s, &req).unwrap();
    let red = condense(&s, &DofPartition::all_master(4)).unwrap();
    let z = solve_reduced_frf(&red, &req).unwrap();
    let reduced = expand_response(&red, &z, &req.outputs).unwrap();
    for (a, b) in reduced.as_slice().iter().zip(full.as_slice()) {
        assert!((a - b).abs() < 1e-12 * b, "{a} vs {b}");
    }
}

// Plate pencils have condition numbers near 1e8, so the dense reduced
// solver and the sparse full solver agree only to about 1e-12 relative.
#[test]
fn all_master_plate_frf_tracks_full_frf() {
    let (model, sys) = small_plate();
    let s = realize_system(&sys, &UncertainInput::nominal()).unwrap();
    let part = DofPartition::all_master(model.dofs());
    let full = solve_full_frf(&s, &model.request).unwrap();
    let red = condense(&s, &part).unwrap();
    let z = solve_reduced_frf(&red, &model.request).unwrap();
    let reduced = expand_response(&red, &z, &model.request.outputs).unwrap();
    for (a, b) in reduced.as_slice().iter().zip(full.as_slice()) {
        assert!((a - b).abs() < 1e-9 * b, "{a} vs {b}");
    }
    assert_eq!(guyan_frf(&s, &part, &model.request).unwrap(), full);
}

#[test]
fn reduced_frequencies_bound_the_full_ones() {
    let (model, sys) = small_plate();
    let s = realize_system(&sys, &UncertainInput::nominal()).unwrap();
    let required: Vec<usize> = model.request.forces.iter().map(|f| f.0).collect();
    let part = select_masters(&s, 12, &required).unwrap();
    assert_eq!(part.masters().len(), 12);
    let red = condense(&s, &part).unwrap();
    let full = natural_frequencies(&s, 5).unwrap();
    let guyan = reduced_natural_frequencies(&red, 5).unwrap();
    for (g, f) in guyan.iter().zip(&full) {
        assert!(*g >= f * (1.0 - 1e-6), "{g} below {f}");
    }
}

#[test]
fn master_output_passes_through_unchanged() {
    let s = chain4();
    let red = condense(&s, &DofPartition::new(4, &[1, 3]).unwrap()).unwrap();
    let z = vec![DVector::from_vec(vec![Complex64::new(0.3, -0.4), Complex64::new(1.0, 0.0)])];
    let u = expand_response(&red, &z, &[1]).unwrap();
    assert_eq!(u.as_slice(), &[0.5]);
}
