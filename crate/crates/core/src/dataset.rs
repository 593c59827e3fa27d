//! Paired high/low-fidelity datasets: generation, persistence, nested
//! splitting and summary statistics.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{fmt_f64, parse_f64, read_csv, read_json, write_csv, write_json};
use crate::error::{Error, Result};
use crate::fem::{realize_system, solve_full_frf, FemModel, UncertainInput, PARAM_COUNT};
use crate::guyan::{guyan_frf, select_masters, DofPartition, ReductionConfig};
use crate::response::ResponseVector;

const FORMAT_NAME: &str = "vibefuse-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub fidelity: Fidelity,
    pub freqs_hz: Vec<f64>,
    pub output_dofs: Vec<usize>,
    pub seed: u64,
    pub model_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityDataset {
    pub meta: DatasetMeta,
    pub thetas: Vec<UncertainInput>,
    pub responses: Vec<ResponseVector>,
}

impl FidelityDataset {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `n·p`, the length of every response row.
    pub fn response_len(&self) -> usize {
        self.meta.freqs_hz.len() * self.meta.output_dofs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.len() != self.responses.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} responses",
                self.thetas.len(),
                self.responses.len()
            )));
        }
        for (i, y) in self.responses.iter().enumerate() {
            y.validate(self.meta.output_dofs.len(), self.meta.freqs_hz.len())
                .map_err(|e| e.at_sample(i))?;
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            meta: self.meta.clone(),
            thetas: rows.iter().map(|&i| self.thetas[i]).collect(),
            responses: rows.iter().map(|&i| self.responses[i].clone()).collect(),
        }
    }
}

/// The full model plus the frozen master set of its reduced counterpart.
#[derive(Debug, Clone)]
pub struct TwoFidelityModel {
    pub fem: FemModel,
    pub partition: DofPartition,
}

impl TwoFidelityModel {
    /// Selects masters on the nominal system (forced and output DOFs retained).
    pub fn new(fem: FemModel, reduction: &ReductionConfig) -> Result<Self> {
        let n = fem.dofs();
        let partition = match &reduction.masters {
            Some(list) => DofPartition::new(n, list)?,
            None => {
                let mut required: Vec<usize> = fem.request.forces.iter().map(|f| f.0).collect();
                required.extend(&fem.request.outputs);
                required.sort_unstable();
                required.dedup();
                let target = reduction.target_count(n, required.len());
                let nominal = realize_system(&fem.system, &UncertainInput::nominal())?;
                select_masters(&nominal, target, &required)?
            }
        };
        for &(d, _) in &fem.request.forces {
            if partition.master_index(d).is_none() {
                return Err(Error::Domain(format!("forced DOF {d} is not a master DOF")));
            }
        }
        Ok(Self { fem, partition })
    }

    pub fn high(&self, theta: &UncertainInput) -> Result<ResponseVector> {
        let s = realize_system(&self.fem.system, theta)?;
        solve_full_frf(&s, &self.fem.request)
    }

    pub fn low(&self, theta: &UncertainInput) -> Result<ResponseVector> {
        let s = realize_system(&self.fem.system, theta)?;
        guyan_frf(&s, &self.partition, &self.fem.request)
    }
}

/// Simulates every θ row at both fidelities, in parallel. The first failing
/// row (lowest index) aborts generation.
pub fn generate_datasets(
    model: &TwoFidelityModel,
    thetas: &[UncertainInput],
    seed: u64,
    model_hash: &str,
) -> Result<(FidelityDataset, FidelityDataset)> {
    let results: Vec<Result<(ResponseVector, ResponseVector)>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let hf = model.high(t).map_err(|e| e.at_sample(i))?;
            let lf = model.low(t).map_err(|e| e.at_sample(i))?;
            Ok((hf, lf))
        })
        .collect();
    let mut hf = Vec::with_capacity(thetas.len());
    let mut lf = Vec::with_capacity(thetas.len());
    for r in results {
        let (h, l) = r?;
        hf.push(h);
        lf.push(l);
    }
    let meta = |fidelity| DatasetMeta {
        fidelity,
        freqs_hz: model.fem.request.freqs_hz.clone(),
        output_dofs: model.fem.request.outputs.clone(),
        seed,
        model_hash: model_hash.to_owned(),
    };
    Ok((
        FidelityDataset {
            meta: meta(Fidelity::High),
            thetas: thetas.to_vec(),
            responses: hf,
        },
        FidelityDataset {
            meta: meta(Fidelity::Low),
            thetas: thetas.to_vec(),
            responses: lf,
        },
    ))
}

/// The `split` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_lf_train")]
    pub lf_train: usize,
    #[serde(default = "default_hf_train")]
    pub hf_train: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_lf_train() -> usize {
    400
}

fn default_hf_train() -> usize {
    40
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            lf_train: default_lf_train(),
            hf_train: default_hf_train(),
            seed: None,
        }
    }
}

/// Row ids (ascending) of the three nested subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedSplit {
    pub lf_train: Vec<usize>,
    pub hf_train: Vec<usize>,
    pub hf_test: Vec<usize>,
    pub seed: u64,
}

/// LF-train is drawn uniformly without replacement, HF-train uniformly from
/// LF-train, and HF-test is every row outside LF-train.
pub fn split_nested(
    hf: &FidelityDataset,
    lf: &FidelityDataset,
    lf_train: usize,
    hf_train: usize,
    seed: u64,
) -> Result<NestedSplit> {
    if hf.thetas != lf.thetas {
        return Err(Error::Consistency("high- and low-fidelity inputs are not paired".into()));
    }
    let n = lf.len();
    if lf_train > n || hf_train > lf_train {
        return Err(Error::Domain(format!(
            "cannot take {hf_train} HF-train ⊆ {lf_train} LF-train rows from {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut lf_ids = ids[..lf_train].to_vec();
    let mut test = ids[lf_train..].to_vec();
    let mut pick = lf_ids.clone();
    pick.shuffle(&mut rng);
    let mut hf_ids = pick[..hf_train].to_vec();
    lf_ids.sort_unstable();
    hf_ids.sort_unstable();
    test.sort_unstable();
    Ok(NestedSplit {
        lf_train: lf_ids,
        hf_train: hf_ids,
        hf_test: test,
        seed,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    version: u32,
    rows: usize,
    #[serde(flatten)]
    meta: DatasetMeta,
}

fn header(ds_len: usize) -> Vec<String> {
    (1..=PARAM_COUNT)
        .map(|i| format!("theta_{i}"))
        .chain((1..=ds_len).map(|i| format!("u_{i}")))
        .collect()
}

/// Writes `path` (CSV rows) and a JSON sidecar next to it.
pub fn save_dataset(ds: &FidelityDataset, path: &Path) -> Result<()> {
    let rows = ds.thetas.iter().zip(&ds.responses).map(|(t, y)| {
        t.0.iter().chain(&y.0).map(|v| fmt_f64(*v)).collect::<Vec<_>>()
    });
    write_csv(path, &header(ds.response_len()), rows)?;
    write_json(
        &path.with_extension("json"),
        &Sidecar {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            rows: ds.len(),
            meta: ds.meta.clone(),
        },
    )
}

pub fn load_dataset(path: &Path) -> Result<FidelityDataset> {
    let side: Sidecar = read_json(&path.with_extension("json"))?;
    if side.format != FORMAT_NAME || side.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: expected {FORMAT_NAME} v{FORMAT_VERSION}, found {} v{}",
            path.display(),
            side.format,
            side.version
        )));
    }
    let (head, rows) = read_csv(path)?;
    let len = side.meta.freqs_hz.len() * side.meta.output_dofs.len();
    if head != header(len) {
        return Err(Error::Format(format!("{}: unexpected column layout", path.display())));
    }
    if rows.len() != side.rows {
        return Err(Error::Format(format!(
            "{}: sidecar promises {} rows, file has {}",
            path.display(),
            side.rows,
            rows.len()
        )));
    }
    let mut thetas = Vec::with_capacity(rows.len());
    let mut responses = Vec::with_capacity(rows.len());
    for row in rows {
        let v = row.iter().map(|s| parse_f64(s, path)).collect::<Result<Vec<_>>>()?;
        thetas.push(UncertainInput::from_slice(&v[..PARAM_COUNT])?);
        responses.push(ResponseVector(v[PARAM_COUNT..].to_vec()));
    }
    let ds = FidelityDataset {
        meta: side.meta,
        thetas,
        responses,
    };
    ds.validate()?;
    Ok(ds)
}

/// Statistics across rows, one entry per response component.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub freqs_hz: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// `(bin_lo, bin_hi, count)` per component.
    pub histograms: Vec<Vec<(f64, f64, usize)>>,
}

pub const HISTOGRAM_BINS: usize = 30;

/// Envelope, moments and fixed-bin histograms per response component.
pub fn summarize(ds: &FidelityDataset, bins: usize) -> Result<Summary> {
    if ds.is_empty() || bins == 0 {
        return Err(Error::Domain("summary needs at least one row and one bin".into()));
    }
    let n = ds.meta.output_dofs.len();
    let len = ds.response_len();
    let rows = ds.len() as f64;
    let mut s = Summary {
        freqs_hz: (0..len).map(|k| ds.meta.freqs_hz[k / n]).collect(),
        min: vec![],
        max: vec![],
        mean: vec![],
        std: vec![],
        skewness: vec![],
        excess_kurtosis: vec![],
        histograms: vec![],
    };
    for k in 0..len {
        let col: Vec<f64> = ds.responses.iter().map(|y| y.0[k]).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = col.iter().sum::<f64>() / rows;
        let m2 = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / rows;
        let m3 = col.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / rows;
        let m4 = col.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / rows;
        let std = if col.len() > 1 {
            (m2 * rows / (rows - 1.0)).sqrt()
        } else {
            0.0
        };
        let (skew, kurt) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for x in &col {
            let b = if width > 0.0 {
                (((x - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1;
        }
        let hist = counts
            .into_iter()
            .enumerate()
            .map(|(b, c)| {
                let edge = |i: usize| if i == bins { hi } else { lo + width * i as f64 };
                (edge(b), edge(b + 1), c)
            })
            .collect();
        s.min.push(lo);
        s.max.push(hi);
        s.mean.push(mean);
        s.std.push(std);
        s.skewness.push(skew);
        s.excess_kurtosis.push(kurt);
        s.histograms.push(hist);
    }
    Ok(s)
}

/// `<stem>_envelope.csv` and `<stem>_histogram.csv` in `dir`; returns the file names.
pub fn write_summary(s: &Summary, dir: &Path, stem: &str) -> Result<[String; 2]> {
    let env_name = format!("{stem}_envelope.csv");
    let hist_name = format!("{stem}_histogram.csv");
    let head = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    write_csv(
        &dir.join(&env_name),
        &head(&["freq_hz", "min", "max", "mean", "std"]),
        (0..s.min.len()).map(|k| {
            [s.freqs_hz[k], s.min[k], s.max[k], s.mean[k], s.std[k]]
                .iter()
                .map(|v| fmt_f64(*v))
                .collect()
        }),
    )?;
    write_csv(
        &dir.join(&hist_name),
        &head(&["freq_hz", "bin_lo", "bin_hi", "count"]),
        s.histograms.iter().enumerate().flat_map(|(k, h)| {
            h.iter()
                .map(|(lo, hi, c)| vec![fmt_f64(s.freqs_hz[k]), fmt_f64(*lo), fmt_f64(*hi), c.to_string()])
                .collect::<Vec<_>>()
        }),
    )?;
    Ok([env_name, hist_name])
}
