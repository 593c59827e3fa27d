//! Latin hypercube samples of independent normal parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::PARAM_COUNT;

const MAX_REDRAWS: usize = 10_000;

/// The `sampling` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_std")]
    pub std: f64,
    /// Falls back to the global seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_count() -> usize {
    1000
}

fn default_std() -> f64 {
    0.10
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            count: default_count(),
            std: default_std(),
            seed: None,
        }
    }
}

impl SamplingConfig {
    pub fn spec(&self, global_seed: u64) -> SamplingSpec {
        SamplingSpec {
            means: vec![0.0; PARAM_COUNT],
            stds: vec![self.std; PARAM_COUNT],
            count: self.count,
            seed: self.seed.unwrap_or(global_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSpec {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub count: usize,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn dimension(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() || self.means.len() != self.stds.len() {
            return Err(Error::Domain("need matching, non-empty means and stds".into()));
        }
        if self.stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("stds must be positive and means finite".into()));
        }
        if self.count == 0 {
            return Err(Error::Domain("sample count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16),
/// accurate to about 1e-16 relative on (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.043_131_580_818_8e-15,
];

/// `count × m` Latin hypercube sample: in every dimension the CDF values
/// occupy each stratum `[i/count, (i+1)/count)` exactly once, at a uniform
/// position inside the stratum, with rows assigned by a seeded permutation.
/// Draws with `1 + x ≤ 0` are redrawn inside the same stratum.
pub fn lhs_normal_samples(spec: &SamplingSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let n = spec.count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = vec![vec![0.0; spec.dimension()]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for (d, (&mu, &sigma)) in spec.means.iter().zip(&spec.stds).enumerate() {
        perm.shuffle(&mut rng);
        for (stratum, &row) in perm.iter().enumerate() {
            let mut tries = 0;
            let x = loop {
                let u = (stratum as f64 + rng.random::<f64>()) / n as f64;
                let x = mu + sigma * normal_quantile(u);
                if 1.0 + x > 0.0 && x.is_finite() {
                    break x;
                }
                tries += 1;
                if tries == MAX_REDRAWS {
                    return Err(Error::Domain(format!(
                        "stratum {stratum} of dimension {d} never yields a positive 1 + x"
                    )));
                }
            };
            rows[row][d] = x;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_symmetry_and_centre() {
        assert_eq!(normal_quantile(0.5), 0.0);
        for p in [2f64.powi(-40), 2f64.powi(-10), 0.125, 0.25, 0.375] {
            assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-12);
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
    }

    #[test]
    fn single_sample() {
        let spec = SamplingSpec {
            means: vec![0.0; 3],
            stds: vec![0.1; 3],
            count: 1,
            seed: 3,
        };
        let s = lhs_normal_samples(&spec).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
    }

    #[test]
    fn impossible_positivity_is_reported() {
        let spec = SamplingSpec {
            means: vec![-5.0],
            stds: vec![0.01],
            count: 2,
            seed: 0,
        };
        assert!(matches!(lhs_normal_samples(&spec), Err(Error::Domain(_))));
    }
}
