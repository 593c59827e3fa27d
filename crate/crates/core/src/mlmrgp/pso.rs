use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoConfig {
    #[serde(default = "d_particles")]
    pub particles: usize,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_inertia")]
    pub inertia: f64,
    #[serde(default = "d_accel")]
    pub cognitive: f64,
    #[serde(default = "d_accel")]
    pub social: f64,
}

fn d_particles() -> usize {
    30
}
fn d_iterations() -> usize {
    200
}
fn d_inertia() -> f64 {
    0.72
}
fn d_accel() -> f64 {
    1.49
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: d_particles(),
            iterations: d_iterations(),
            inertia: d_inertia(),
            cognitive: d_accel(),
            social: d_accel(),
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.iterations == 0 {
            return Err(Error::Domain("particle and iteration counts must be positive".into()));
        }
        if ![self.inertia, self.cognitive, self.social].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("swarm coefficients must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub position: Vec<f64>,
    pub value: f64,
    /// Objective at each particle's initial position.
    pub initial_values: Vec<f64>,
}

/// Maximizes `objective` over the box `bounds`. Initial positions are uniform
/// in the box with zero velocity; non-finite objective values count as −∞.
/// Evaluations run in parallel, all random draws happen sequentially, so the
/// result depends only on `seed`.
pub fn pso_optimize<F>(objective: F, bounds: &[(f64, f64)], cfg: &PsoConfig, seed: u64) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Domain("search bounds must be finite, ordered and non-empty".into()));
    }
    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect())
        .collect();
    let mut v = vec![vec![0.0; dim]; cfg.particles];
    let eval = |x: &[Vec<f64>]| -> Vec<f64> {
        x.par_iter()
            .map(|p| {
                let f = objective(p);
                if f.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    f
                }
            })
            .collect()
    };
    let initial_values = eval(&x);
    let mut best_x = x.clone();
    let mut best_f = initial_values.clone();
    let mut g = argmax(&best_f);
    for _ in 1..cfg.iterations {
        for i in 0..cfg.particles {
            for k in 0..dim {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                v[i][k] = cfg.inertia * v[i][k]
                    + cfg.cognitive * r1 * (best_x[i][k] - x[i][k])
                    + cfg.social * r2 * (best_x[g][k] - x[i][k]);
                x[i][k] = (x[i][k] + v[i][k]).clamp(bounds[k].0, bounds[k].1);
            }
        }
        let f = eval(&x);
        for i in 0..cfg.particles {
            if f[i] > best_f[i] {
                best_f[i] = f[i];
                best_x[i].clone_from(&x[i]);
            }
        }
        g = argmax(&best_f);
    }
    Ok(PsoOutcome {
        position: best_x[g].clone(),
        value: best_f[g],
        initial_values,
    })
}

fn argmax(f: &[f64]) -> usize {
    let mut g = 0;
    for (i, &v) in f.iter().enumerate() {
        if v > f[g] {
            g = i;
        }
    }
    g
}
