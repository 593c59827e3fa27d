use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vibefuse::nn::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn two_layer_forward_matches_loops() {
    let net = Mlp::glorot(&[4, 6, 3], Activation::Relu, Activation::Linear, &mut rng(3));
    let mut net = net;
    for l in &mut net.layers {
        l.bias = DVector::from_fn(l.output_dim(), |i, _| 0.1 * i as f64 - 0.2);
    }
    let x = DMatrix::from_fn(4, 2, |i, j| (i as f64 - 1.5) * (j as f64 + 0.5));
    let y = net.predict(&x).unwrap();
    for s in 0..2 {
        let mut h = [0.0; 6];
        for (r, hr) in h.iter_mut().enumerate() {
            let mut acc = net.layers[0].bias[r];
            for c in 0..4 {
                acc += net.layers[0].weights[(r, c)] * x[(c, s)];
            }
            *hr = acc.max(0.0);
        }
        for r in 0..3 {
            let mut acc = net.layers[1].bias[r];
            for (c, hc) in h.iter().enumerate() {
                acc += net.layers[1].weights[(r, c)] * hc;
            }
            assert!((y[(r, s)] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn scalar_linear_gradient() {
    let mut l = DenseLayer::zeros(1, 1, Activation::Linear);
    let (w, x, t) = (0.7, 1.3, 2.0);
    l.weights[(0, 0)] = w;
    let net = Mlp { layers: vec![l] };
    let xm = DMatrix::from_element(1, 1, x);
    let trace = net.forward(&xm).unwrap();
    let g = DMatrix::from_element(1, 1, 2.0 * (trace.output()[(0, 0)] - t));
    let (grads, _) = net.backward(&trace, &g);
    assert!((grads[0].weights[(0, 0)] - 2.0 * x * (w * x - t)).abs() < 1e-15);
}

#[test]
fn dead_relu_unit_gets_no_gradient() {
    let mut l = DenseLayer::zeros(1, 2, Activation::Relu);
    l.weights[(0, 0)] = -1.0;
    l.weights[(1, 0)] = 1.0;
    let net = Mlp { layers: vec![l] };
    let trace = net.forward(&DMatrix::from_element(1, 1, 2.0)).unwrap();
    let (grads, _) = net.backward(&trace, &DMatrix::from_element(2, 1, 1.0));
    assert_eq!(grads[0].weights[(0, 0)], 0.0);
    assert_eq!(grads[0].bias[0], 0.0);
    assert_eq!(grads[0].weights[(1, 0)], 2.0);
}

fn loss(net: &Mlp, x: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    (net.predict(x).unwrap() - t).norm_squared()
}

#[test]
fn gradients_match_central_differences() {
    let mut net = Mlp::glorot(&[5, 8, 7, 3], Activation::Relu, Activation::Linear, &mut rng(8));
    for l in &mut net.layers {
        l.bias = DVector::from_fn(l.output_dim(), |i, _| 0.05 * (i as f64 - 2.0));
    }
    let x = DMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4);
    let t = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64 * 0.1);
    let trace = net.forward(&x).unwrap();
    let (grads, grad_in) = net.backward(&trace, &(2.0 * (trace.output() - &t)));
    let analytic: Vec<f64> = grad_slices(&grads).concat();
    let base = net.clone();
    let mut k = 0;
    let mut worst: f64 = 0.0;
    for block in 0..base.params().len() {
        for i in 0..base.params()[block].len() {
            let p0 = base.params()[block][i];
            let h = 1e-6 * p0.abs().max(1.0);
            let mut plus = base.clone();
            plus.params_mut()[block][i] = p0 + h;
            let mut minus = base.clone();
            minus.params_mut()[block][i] = p0 - h;
            let fd = (loss(&plus, &x, &t) - loss(&minus, &x, &t)) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / analytic[k].abs().max(1e-6);
            worst = worst.max(err);
            k += 1;
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
    // input gradient
    for i in 0..5 {
        let h = 1e-6;
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[(i, 1)] += h;
        xm[(i, 1)] -= h;
        let fd = (loss(&base, &xp, &t) - loss(&base, &xm, &t)) / (2.0 * h);
        assert!((fd - grad_in[(i, 1)]).abs() <= 1e-5 * grad_in[(i, 1)].abs().max(1e-6));
    }
}

#[test]
fn adam_three_step_trace() {
    let mut p = vec![1.0];
    let mut st = AdamState::new(AdamConfig::default(), &[&p]);
    // reference recurrence evaluated independently in double precision
    let expect = [0.99900000002, 0.9986543941811651, 0.998275002408357];
    for (g, e) in [0.5, -0.2, 0.1].iter().zip(expect) {
        st.update(vec![p.as_mut_slice()], &[&[*g]]).unwrap();
        assert!((p[0] - e).abs() < 1e-12, "{} vs {e}", p[0]);
    }
    assert_eq!(st.step, 3);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut p = vec![0.3, -2.0];
    let mut st = AdamState::new(AdamConfig::default(), &[&p]);
    st.update(vec![p.as_mut_slice()], &[&[0.0, 0.0]]).unwrap();
    assert_eq!(p, vec![0.3, -2.0]);
}

#[test]
fn glorot_mean_is_centred() {
    let l = DenseLayer::glorot(100, 100, Activation::Relu, &mut rng(21));
    let bound = (6.0f64 / 200.0).sqrt();
    let mean = l.weights.iter().sum::<f64>() / l.weights.len() as f64;
    assert!(mean.abs() < 0.005 * bound, "{mean}");
    assert!(l.weights.iter().all(|w| w.abs() <= bound));
}

#[test]
fn weights_round_trip_bitwise() {
    let a = Mlp::glorot(&[3, 5, 2], Activation::Relu, Activation::Linear, &mut rng(1));
    let b = Mlp::glorot(&[2, 4], Activation::Linear, Activation::Linear, &mut rng(2));
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("model");
    save_networks(&stem, &[("a", &a), ("b", &b)], serde_json::json!({"alpha": 0.6})).unwrap();
    let (nets, extra) = load_networks(&stem).unwrap();
    assert_eq!(nets[0], ("a".to_string(), a));
    assert_eq!(nets[1], ("b".to_string(), b));
    assert_eq!(extra["alpha"], 0.6);
    std::fs::write(stem.with_extension("bin"), [0u8; 7]).unwrap();
    assert!(load_networks(&stem).is_err());
}

proptest! {
    #[test]
    fn adam_first_step_moves_by_lr(g in prop::collection::vec(-1e3f64..1e3, 1..20)) {
        prop_assume!(g.iter().all(|v| v.abs() > 1e-3));
        let mut p = vec![0.0; g.len()];
        let mut st = AdamState::new(AdamConfig::default(), &[&p]);
        st.update(vec![p.as_mut_slice()], &[&g]).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            prop_assert!((pi + 1e-3 * gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn glorot_is_seed_deterministic(seed in any::<u64>()) {
        let a = Mlp::glorot(&[4, 3, 2], Activation::Relu, Activation::Linear, &mut rng(seed));
        let b = Mlp::glorot(&[4, 3, 2], Activation::Relu, Activation::Linear, &mut rng(seed));
        prop_assert_eq!(a, b);
    }
}
