use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use vibefuse::sampling::*;

fn spec(m: usize, count: usize, seed: u64) -> SamplingSpec {
    SamplingSpec {
        means: vec![0.0; m],
        stds: vec![0.1; m],
        count,
        seed,
    }
}

fn column(s: &[Vec<f64>], d: usize) -> Vec<f64> {
    s.iter().map(|r| r[d]).collect()
}

// One Newton step against the reference CDF estimates the quantile error.
#[test]
fn quantile_inverts_reference_cdf() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let probes = (1..2000)
        .map(|i| i as f64 / 2000.0)
        .chain([1e-300, 1e-100, 1e-20, 1e-9, 1.0 - 1e-9]);
    for p in probes {
        let x = normal_quantile(p);
        let err = (n.cdf(x) - p).abs() / n.pdf(x);
        assert!(err < 1e-9, "p = {p}: {err:e}");
    }
    // 40-digit reference values
    assert!((normal_quantile(0.0025) + 2.807_033_768_343_804).abs() < 1e-14);
    assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
}

#[test]
fn large_sample_moments() {
    let s = lhs_normal_samples(&spec(12, 10_000, 42)).unwrap();
    for d in 0..12 {
        let c = column(&s, d);
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (c.len() - 1) as f64;
        assert!(mean.abs() < 0.003, "mean {mean}");
        assert!((0.097..=0.103).contains(&var.sqrt()), "std {}", var.sqrt());
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (k, &i) in idx.iter().enumerate() {
        r[i] = k as f64;
    }
    r
}

#[test]
fn dimensions_are_rank_uncorrelated() {
    let s = lhs_normal_samples(&spec(12, 1000, 11)).unwrap();
    let n = 1000.0;
    for a in 0..12 {
        for b in (a + 1)..12 {
            let (ra, rb) = (ranks(&column(&s, a)), ranks(&column(&s, b)));
            let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
            let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
            assert!(rho.abs() < 0.1, "dims {a},{b}: {rho}");
        }
    }
}

#[test]
fn quartiles_are_filled_once() {
    let s = lhs_normal_samples(&spec(3, 4, 5)).unwrap();
    let n = Normal::new(0.0, 0.1).unwrap();
    for d in 0..3 {
        let mut p: Vec<f64> = column(&s, d).iter().map(|x| n.cdf(*x)).collect();
        p.sort_by(f64::total_cmp);
        for (i, v) in p.iter().enumerate() {
            assert!(*v >= i as f64 / 4.0 && *v < (i + 1) as f64 / 4.0);
        }
    }
}

proptest! {
    #[test]
    fn every_stratum_is_hit_once(count in 1usize..200, m in 1usize..6, seed in any::<u64>(), std in 0.01f64..0.3) {
        let sp = SamplingSpec { means: vec![0.0; m], stds: vec![std; m], count, seed };
        let s = lhs_normal_samples(&sp).unwrap();
        prop_assert_eq!(s.len(), count);
        let n = Normal::new(0.0, std).unwrap();
        for d in 0..m {
            let mut hit = vec![0usize; count];
            for r in &s {
                prop_assert!(1.0 + r[d] > 0.0);
                // guard against CDF rounding right at a stratum edge
                let p = n.cdf(r[d]) * count as f64;
                let k = (p.floor() as usize).min(count - 1);
                if (p - p.round()).abs() > 1e-9 {
                    hit[k] += 1;
                }
            }
            prop_assert!(hit.iter().all(|&h| h <= 1));
        }
    }

    #[test]
    fn identical_seed_is_bitwise_identical(seed in any::<u64>()) {
        let a = lhs_normal_samples(&spec(12, 20, seed)).unwrap();
        let b = lhs_normal_samples(&spec(12, 20, seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
