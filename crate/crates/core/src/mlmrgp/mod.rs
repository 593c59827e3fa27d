//! Two-level multi-response co-kriging: a low-fidelity Gaussian process and a
//! discrepancy process linked by `y_high = ρ · y_low + δ`, fitted recursively.

mod kernel;
mod level;
mod pso;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use kernel::{squared_exp_kernel, Grouping, KernelParams};
pub use level::{LevelPrediction, MrgpLevel};
pub use pso::{pso_optimize, PsoConfig, PsoOutcome};

use crate::artifact::{read_json, write_json};
use crate::dataset::{FidelityDataset, NestedSplit};
use crate::error::{Error, Result};
use crate::fem::UncertainInput;
use crate::response::ResponseVector;
use level::{profile, Design};

/// The `mlmrgp` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlmrgpConfig {
    #[serde(default)]
    pub grouping: Grouping,
    #[serde(default = "d_jitter")]
    pub jitter: f64,
    /// Search range of every roughness entry (scaled inputs); searched in log space.
    #[serde(default = "d_rough")]
    pub roughness_bounds: [f64; 2],
    #[serde(default = "d_rho")]
    pub rho_bounds: [f64; 2],
    #[serde(default)]
    pub pso: PsoConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn d_jitter() -> f64 {
    1e-8
}
fn d_rough() -> [f64; 2] {
    [1e-4, 1e3]
}
fn d_rho() -> [f64; 2] {
    [-10.0, 10.0]
}

impl Default for MlmrgpConfig {
    fn default() -> Self {
        Self {
            grouping: Grouping::default(),
            jitter: d_jitter(),
            roughness_bounds: d_rough(),
            rho_bounds: d_rho(),
            pso: PsoConfig::default(),
            seed: None,
        }
    }
}

impl MlmrgpConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.roughness_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Domain("roughness bounds must satisfy 0 < lo ≤ hi < ∞".into()));
        }
        let [lo, hi] = self.rho_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Domain("ρ bounds must be finite and ordered".into()));
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return Err(Error::Domain("jitter must be positive".into()));
        }
        self.pso.validate()
    }

    fn log10_bounds(&self) -> (f64, f64) {
        (self.roughness_bounds[0].log10(), self.roughness_bounds[1].log10())
    }
}

/// Inputs min-max scaled and outputs z-scored, both with low-fidelity
/// training statistics. Constant columns keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpScaling {
    pub x_min: Vec<f64>,
    pub x_range: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

impl GpScaling {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>]) -> Self {
        fn cols(m: &[Vec<f64>], k: usize) -> impl Iterator<Item = f64> + '_ {
            m.iter().map(move |r| r[k])
        }
        let unit = |s: f64| if s > 0.0 && s.is_finite() { s } else { 1.0 };
        let (p, d) = (x[0].len(), y[0].len());
        let x_min: Vec<f64> = (0..p).map(|k| cols(x, k).fold(f64::INFINITY, f64::min)).collect();
        let x_range = (0..p)
            .map(|k| unit(cols(x, k).fold(f64::NEG_INFINITY, f64::max) - x_min[k]))
            .collect();
        let n = y.len() as f64;
        let y_mean: Vec<f64> = (0..d).map(|k| cols(y, k).sum::<f64>() / n).collect();
        let y_std = (0..d)
            .map(|k| unit((cols(y, k).map(|v| (v - y_mean[k]).powi(2)).sum::<f64>() / n).sqrt()))
            .collect();
        Self {
            x_min,
            x_range,
            y_mean,
            y_std,
        }
    }

    pub fn x(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.x_min).zip(&self.x_range).map(|((v, m), r)| (v - m) / r).collect()
    }

    pub fn y(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.y_mean.len(), |i, k| {
            (rows[i][k] - self.y_mean[k]) / self.y_std[k]
        })
    }

    fn y_back(&self, m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|k| m[(i, k)] * self.y_std[k] + self.y_mean[k]).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MlmrgpModel {
    pub scaling: GpScaling,
    pub rho: f64,
    pub low: MrgpLevel,
    pub discrepancy: MrgpLevel,
}

/// Posterior mean and per-response variance, in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmrgpPrediction {
    pub mean: Vec<ResponseVector>,
    pub variance: Vec<Vec<f64>>,
}

/// Fits the low-fidelity level on `(lf_x, lf_y)`, then `(ρ, discrepancy
/// roughness)` jointly on `D = y_high − ρ · y_low` at the high-fidelity
/// inputs, which must all appear among `lf_x`.
pub fn fit_two_level(
    lf_x: &[Vec<f64>],
    lf_y: &[Vec<f64>],
    hf_x: &[Vec<f64>],
    hf_y: &[Vec<f64>],
    cfg: &MlmrgpConfig,
    seed: u64,
) -> Result<MlmrgpModel> {
    cfg.validate()?;
    if lf_x.is_empty() || lf_x.len() != lf_y.len() || hf_x.len() != hf_y.len() {
        return Err(Error::Shape("input and output row counts differ or are empty".into()));
    }
    let d = lf_y[0].len();
    if lf_y.iter().chain(hf_y).any(|r| r.len() != d) {
        return Err(Error::Shape(format!("every output row needs {d} entries")));
    }
    let shared = hf_x
        .iter()
        .map(|x| lf_x.iter().position(|l| l == x))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| Error::Consistency("high-fidelity inputs are not a subset of the low-fidelity inputs".into()))?;
    let groups = cfg.grouping.assignment(lf_x[0].len())?;
    let scaling = GpScaling::fit(lf_x, lf_y);
    let x1: Vec<Vec<f64>> = lf_x.iter().map(|r| scaling.x(r)).collect();
    let y1 = scaling.y(lf_y);
    let low = MrgpLevel::fit(x1, y1.clone(), groups.clone(), cfg.jitter, cfg.log10_bounds(), &cfg.pso, seed)
        .map_err(|e| e.in_module("mlmrgp low-fidelity level"))?;

    let x2: Vec<Vec<f64>> = hf_x.iter().map(|r| scaling.x(r)).collect();
    let y2 = scaling.y(hf_y);
    let y1_at = y1.select_rows(&shared);
    let design = Design::new(x2, groups)?;
    let mut bounds = vec![(cfg.rho_bounds[0], cfg.rho_bounds[1])];
    bounds.extend(std::iter::repeat_n(cfg.log10_bounds(), design.group_count()));
    let split = |z: &[f64]| {
        let kernel = KernelParams {
            b: z[1..].iter().map(|v| 10f64.powf(*v)).collect(),
            jitter: cfg.jitter,
        };
        (&y2 - &y1_at * z[0], kernel)
    };
    let best = pso_optimize(
        |z| {
            let (dz, kernel) = split(z);
            profile(&design, &dz, &kernel).map_or(f64::NEG_INFINITY, |p| p.log_likelihood)
        },
        &bounds,
        &cfg.pso,
        seed.wrapping_add(1),
    )?;
    if !best.value.is_finite() {
        return Err(Error::Gp("no particle produced a finite discrepancy likelihood".into()).in_module("mlmrgp"));
    }
    let (dz, kernel) = split(&best.position);
    let discrepancy = MrgpLevel::from_design(design, dz, kernel)?;
    Ok(MlmrgpModel {
        scaling,
        rho: best.position[0],
        low,
        discrepancy,
    })
}

/// [`fit_two_level`] on the LF-train and HF-train rows of a split.
pub fn fit_from_split(
    hf: &FidelityDataset,
    lf: &FidelityDataset,
    split: &NestedSplit,
    cfg: &MlmrgpConfig,
    seed: u64,
) -> Result<MlmrgpModel> {
    let rows = |ds: &FidelityDataset, ids: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        ids.iter()
            .map(|&i| (ds.thetas[i].0.to_vec(), ds.responses[i].0.clone()))
            .unzip()
    };
    let (lx, ly) = rows(lf, &split.lf_train);
    let (hx, hy) = rows(hf, &split.hf_train);
    fit_two_level(&lx, &ly, &hx, &hy, cfg, seed)
}

impl MlmrgpModel {
    /// Optimized hyperparameters: both roughness vectors and ρ.
    pub fn hyperparameter_count(&self) -> usize {
        self.low.kernel().b.len() + self.discrepancy.kernel().b.len() + 1
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if rows.is_empty() {
            return Ok((vec![], vec![]));
        }
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| self.scaling.x(r)).collect();
        let p1 = self.low.predict(&xs)?;
        let p2 = self.discrepancy.predict(&xs)?;
        let mean = self.scaling.y_back(&(p1.mean * self.rho + p2.mean));
        let (q1, q2) = (self.low.q_hat(), self.discrepancy.q_hat());
        let var = (0..rows.len())
            .map(|j| {
                (0..self.scaling.y_std.len())
                    .map(|k| {
                        let s = self.rho * self.rho * p1.s2[j] * q1[(k, k)] + p2.s2[j] * q2[(k, k)];
                        s * self.scaling.y_std[k].powi(2)
                    })
                    .collect()
            })
            .collect();
        Ok((mean, var))
    }

    pub fn predict(&self, thetas: &[UncertainInput]) -> Result<MlmrgpPrediction> {
        let rows: Vec<Vec<f64>> = thetas.iter().map(|t| t.0.to_vec()).collect();
        let (mean, variance) = self.predict_rows(&rows)?;
        Ok(MlmrgpPrediction {
            mean: mean.into_iter().map(ResponseVector).collect(),
            variance,
        })
    }

    /// Posterior mean of the low-fidelity level alone, physical units.
    pub fn predict_low_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| self.scaling.x(r)).collect();
        Ok(self.scaling.y_back(&self.low.predict(&xs)?.mean))
    }

    /// Posterior mean of `δ` in physical units, so that
    /// `ŷ_high = ρ · ŷ_low + δ̂` holds without the output scaling.
    pub fn discrepancy_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| self.scaling.x(r)).collect();
        let m = self.discrepancy.predict(&xs)?.mean;
        let s = &self.scaling;
        Ok((0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|k| m[(i, k)] * s.y_std[k] + (1.0 - self.rho) * s.y_mean[k])
                    .collect()
            })
            .collect())
    }

    pub fn save(&self, path: &Path, config: &MlmrgpConfig) -> Result<()> {
        let level = |l: &MrgpLevel| SavedLevel {
            inputs: l.inputs().to_vec(),
            outputs: rows_of(l.outputs()),
            groups: l.groups().to_vec(),
            kernel: l.kernel().clone(),
            beta: rows_of(l.beta()),
            q_hat: rows_of(l.q_hat()),
            log_likelihood: l.log_likelihood(),
        };
        write_json(
            path,
            &SavedModel {
                format: FORMAT.into(),
                version: VERSION,
                rho: self.rho,
                scaling: self.scaling.clone(),
                low: level(&self.low),
                discrepancy: level(&self.discrepancy),
                config: config.clone(),
            },
        )
    }

    /// Refactors both levels from the stored data and hyperparameters.
    pub fn load(path: &Path) -> Result<Self> {
        let s: SavedModel = read_json(path)?;
        if s.format != FORMAT || s.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                path.display(),
                s.format,
                s.version
            )));
        }
        let level = |l: SavedLevel| {
            let d = l.outputs.first().map_or(0, Vec::len);
            let y = DMatrix::from_fn(l.outputs.len(), d, |i, k| l.outputs[i][k]);
            MrgpLevel::with_kernel(l.inputs, y, l.groups, l.kernel)
        };
        Ok(Self {
            scaling: s.scaling,
            rho: s.rho,
            low: level(s.low)?,
            discrepancy: level(s.discrepancy)?,
        })
    }
}

const FORMAT: &str = "vibefuse-mlmrgp";
const VERSION: u32 = 1;

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedLevel {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    groups: Vec<usize>,
    kernel: KernelParams,
    beta: Vec<Vec<f64>>,
    q_hat: Vec<Vec<f64>>,
    log_likelihood: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedModel {
    format: String,
    version: u32,
    rho: f64,
    scaling: GpScaling,
    low: SavedLevel,
    discrepancy: SavedLevel,
    config: MlmrgpConfig,
}
