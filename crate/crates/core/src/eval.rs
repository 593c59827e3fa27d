//! Error metrics and the comparison / robustness / sweep studies.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{fmt_f64, write_csv};
use crate::dataset::{split_nested, FidelityDataset, NestedSplit};
use crate::error::{Error, Result};
use crate::fem::UncertainInput;
use crate::mfdf::{fill_pseudo_high_fidelity, train_composite, MfdfConfig};
use crate::mlmrgp::{fit_from_split, MlmrgpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emulator {
    MfdfCnn,
    Mlmrgp,
}

impl Emulator {
    pub fn tag(self) -> &'static str {
        match self {
            Emulator::MfdfCnn => "mfdfcnn",
            Emulator::Mlmrgp => "mlmrgp",
        }
    }
}

/// Per-point test error of one emulator on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub emulator: Emulator,
    pub split_seed: u64,
    pub run: usize,
    /// Mean squared error per response point over the test rows.
    pub mse: Vec<f64>,
    /// `ln(mse)`; `-inf` where the error vanished exactly.
    pub log_mse: Vec<f64>,
}

impl EvalReport {
    pub fn new(emulator: Emulator, split_seed: u64, run: usize, mse: Vec<f64>) -> Self {
        let log_mse = mse.iter().map(|m| log_or_sentinel(*m)).collect();
        Self {
            emulator,
            split_seed,
            run,
            mse,
            log_mse,
        }
    }

    /// True when a point has zero error and therefore a `-inf` log.
    pub fn has_zero_error(&self) -> bool {
        self.log_mse.iter().any(|v| *v == f64::NEG_INFINITY)
    }
}

fn log_or_sentinel(m: f64) -> f64 {
    if m == 0.0 {
        f64::NEG_INFINITY
    } else {
        m.ln()
    }
}

/// `η_r = (1/M) Σ_k (y_kr − ŷ_kr)²`.
pub fn per_frequency_mse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} test rows",
            pred.len(),
            truth.len()
        )));
    }
    let p = truth[0].len();
    if pred.iter().chain(truth).any(|r| r.len() != p) {
        return Err(Error::Shape(format!("every row needs {p} response points")));
    }
    let mut acc = vec![0.0; p];
    for (a, b) in pred.iter().zip(truth) {
        for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
            *s += (x - y) * (x - y);
        }
    }
    let m = truth.len() as f64;
    Ok(acc.into_iter().map(|s| s / m).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Robustness,
    HfFraction,
    Alpha,
}

/// Runs of one emulator and their mean log error per point.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub emulator: Emulator,
    pub runs: Vec<EvalReport>,
    pub mean_log_mse: Vec<f64>,
}

pub fn log_mse_aggregate(kind: StudyKind, runs: Vec<EvalReport>) -> Result<StudyReport> {
    let Some(first) = runs.first() else {
        return Err(Error::Domain("no runs to aggregate".into()));
    };
    let (emulator, p) = (first.emulator, first.mse.len());
    if runs.iter().any(|r| r.emulator != emulator || r.mse.len() != p) {
        return Err(Error::Consistency("runs mix emulators or response lengths".into()));
    }
    let q = runs.len() as f64;
    let mean_log_mse = (0..p).map(|r| runs.iter().map(|t| t.log_mse[r]).sum::<f64>() / q).collect();
    Ok(StudyReport {
        kind,
        emulator,
        runs,
        mean_log_mse,
    })
}

/// The `eval` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "d_runs")]
    pub robustness_runs: usize,
    #[serde(default = "d_curves")]
    pub curve_samples: usize,
    #[serde(default = "d_fractions")]
    pub hf_fractions: Vec<f64>,
    #[serde(default = "d_alphas")]
    pub alpha_grid: Vec<f64>,
    /// Drives the curve-sample draw; falls back to the global seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn d_runs() -> usize {
    5
}
fn d_curves() -> usize {
    6
}
fn d_fractions() -> Vec<f64> {
    vec![0.1, 0.2, 0.3]
}
fn d_alphas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            robustness_runs: d_runs(),
            curve_samples: d_curves(),
            hf_fractions: d_fractions(),
            alpha_grid: d_alphas(),
            seed: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.robustness_runs == 0 {
            return Err(Error::Domain("robustness study needs at least one run".into()));
        }
        if self.hf_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Domain("HF fractions must lie in (0, 1]".into()));
        }
        if self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Domain("α grid must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything a study needs, with seeds already resolved.
#[derive(Debug, Clone, Copy)]
pub struct StudyContext<'a> {
    pub hf: &'a FidelityDataset,
    pub lf: &'a FidelityDataset,
    pub lf_train: usize,
    pub hf_train: usize,
    pub split_seed: u64,
    pub mfdf: &'a MfdfConfig,
    pub mfdf_seed: u64,
    pub gp: &'a MlmrgpConfig,
    pub gp_seed: u64,
    pub eval: &'a EvalConfig,
    pub eval_seed: u64,
}

/// Predictions of both emulators on the HF-test rows of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPredictions {
    pub split: NestedSplit,
    pub mfdf: Vec<Vec<f64>>,
    pub gp: Vec<Vec<f64>>,
}

pub fn test_rows(ds: &FidelityDataset, split: &NestedSplit) -> (Vec<UncertainInput>, Vec<Vec<f64>>) {
    split
        .hf_test
        .iter()
        .map(|&i| (ds.thetas[i], ds.responses[i].0.clone()))
        .unzip()
}

fn predict_mfdf(ctx: &StudyContext, split: &NestedSplit, cfg: &MfdfConfig) -> Result<Vec<Vec<f64>>> {
    let set = fill_pseudo_high_fidelity(split, ctx.lf, ctx.hf, cfg.real_weights, cfg.pseudo_weights)?;
    let (model, _) = train_composite(&set, cfg, ctx.mfdf_seed).map_err(|e| e.in_module("mfdf-cnn"))?;
    let (thetas, _) = test_rows(ctx.hf, split);
    let (_, y2) = model.predict(&thetas)?;
    Ok(y2.into_iter().map(|r| r.0).collect())
}

fn predict_gp(ctx: &StudyContext, split: &NestedSplit) -> Result<Vec<Vec<f64>>> {
    let model = fit_from_split(ctx.hf, ctx.lf, split, ctx.gp, ctx.gp_seed).map_err(|e| e.in_module("mlmrgp"))?;
    let (thetas, _) = test_rows(ctx.hf, split);
    Ok(model.predict(&thetas)?.mean.into_iter().map(|r| r.0).collect())
}

fn both_on(ctx: &StudyContext, split: NestedSplit) -> Result<SplitPredictions> {
    let (mfdf, gp) = rayon::join(|| predict_mfdf(ctx, &split, ctx.mfdf), || predict_gp(ctx, &split));
    Ok(SplitPredictions {
        mfdf: mfdf?,
        gp: gp?,
        split,
    })
}

fn reports(ctx: &StudyContext, p: &SplitPredictions, run: usize) -> Result<[EvalReport; 2]> {
    let (_, truth) = test_rows(ctx.hf, &p.split);
    Ok([
        EvalReport::new(Emulator::MfdfCnn, p.split.seed, run, per_frequency_mse(&p.mfdf, &truth)?),
        EvalReport::new(Emulator::Mlmrgp, p.split.seed, run, per_frequency_mse(&p.gp, &truth)?),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub predictions: SplitPredictions,
    pub mfdf: EvalReport,
    pub gp: EvalReport,
    /// HF-test row ids drawn for the curve extracts.
    pub curve_rows: Vec<usize>,
}

/// Trains both emulators on one split and scores them on its HF-test rows.
pub fn run_comparison(ctx: &StudyContext) -> Result<Comparison> {
    ctx.eval.validate()?;
    let split = split_nested(ctx.hf, ctx.lf, ctx.lf_train, ctx.hf_train, ctx.split_seed)?;
    if split.hf_test.is_empty() {
        return Err(Error::Domain("the split leaves no HF-test rows".into()));
    }
    compare_predictions(ctx, both_on(ctx, split)?)
}

/// Scores given HF-test predictions and draws the curve rows.
pub fn compare_predictions(ctx: &StudyContext, predictions: SplitPredictions) -> Result<Comparison> {
    let [mfdf, gp] = reports(ctx, &predictions, 0)?;
    let test = &predictions.split.hf_test;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.eval_seed);
    let mut curve_rows: Vec<usize> = sample(&mut rng, test.len(), ctx.eval.curve_samples.min(test.len()))
        .into_iter()
        .map(|i| test[i])
        .collect();
    curve_rows.sort_unstable();
    Ok(Comparison {
        predictions,
        mfdf,
        gp,
        curve_rows,
    })
}

/// One split per run with split seed `split_seed + t`.
pub fn run_robustness(ctx: &StudyContext) -> Result<[StudyReport; 2]> {
    ctx.eval.validate()?;
    let runs: Vec<[EvalReport; 2]> = (0..ctx.eval.robustness_runs)
        .into_par_iter()
        .map(|t| {
            let seed = ctx.split_seed.wrapping_add(t as u64);
            let split = split_nested(ctx.hf, ctx.lf, ctx.lf_train, ctx.hf_train, seed)?;
            reports(ctx, &both_on(ctx, split)?, t)
        })
        .collect::<Result<_>>()?;
    let (a, b): (Vec<_>, Vec<_>) = runs.into_iter().map(|[a, b]| (a, b)).unzip();
    Ok([
        log_mse_aggregate(StudyKind::Robustness, a)?,
        log_mse_aggregate(StudyKind::Robustness, b)?,
    ])
}

/// One point of a sweep: the swept value and the reports it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub hf_count: usize,
    pub reports: Vec<EvalReport>,
}

/// HF-train sizes `round(f · lf_train)` on a fixed LF-train and test set;
/// smaller HF sets are prefixes of the larger ones.
pub fn run_hf_fraction(ctx: &StudyContext) -> Result<Vec<SweepPoint>> {
    ctx.eval.validate()?;
    ctx.eval
        .hf_fractions
        .par_iter()
        .enumerate()
        .map(|(t, &f)| {
            let count = (f * ctx.lf_train as f64).round() as usize;
            let split = split_nested(ctx.hf, ctx.lf, ctx.lf_train, count, ctx.split_seed)?;
            Ok(SweepPoint {
                value: f,
                hf_count: count,
                reports: reports(ctx, &both_on(ctx, split)?, t)?.to_vec(),
            })
        })
        .collect()
}

/// Retrains the composite network at each α on one split.
pub fn run_alpha(ctx: &StudyContext) -> Result<Vec<SweepPoint>> {
    ctx.eval.validate()?;
    let split = split_nested(ctx.hf, ctx.lf, ctx.lf_train, ctx.hf_train, ctx.split_seed)?;
    let (_, truth) = test_rows(ctx.hf, &split);
    ctx.eval
        .alpha_grid
        .par_iter()
        .enumerate()
        .map(|(t, &alpha)| {
            let cfg = MfdfConfig {
                alpha,
                ..ctx.mfdf.clone()
            };
            let pred = predict_mfdf(ctx, &split, &cfg)?;
            Ok(SweepPoint {
                value: alpha,
                hf_count: split.hf_train.len(),
                reports: vec![EvalReport::new(
                    Emulator::MfdfCnn,
                    split.seed,
                    t,
                    per_frequency_mse(&pred, &truth)?,
                )],
            })
        })
        .collect()
}

/// `comparison.csv`, `scatter.csv`, `curve_rows.csv` and `curves_<k>.csv`.
pub fn write_comparison(c: &Comparison, ctx: &StudyContext, dir: &Path) -> Result<Vec<String>> {
    let freqs = &ctx.hf.meta.freqs_hz;
    let outputs = ctx.hf.meta.output_dofs.len().max(1);
    let freq_of = |r: usize| freqs.get(r / outputs).copied().unwrap_or(f64::NAN);
    let mut files = vec![];
    let mut out = |name: String, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        write_csv(&dir.join(&name), &header, rows)?;
        files.push(name);
        Ok(())
    };
    out(
        "comparison.csv".into(),
        &["freq_point", "freq_hz", "mse_mfdfcnn", "mse_mlmrgp"],
        (0..c.mfdf.mse.len())
            .map(|r| {
                vec![
                    (r + 1).to_string(),
                    fmt_f64(freq_of(r)),
                    fmt_f64(c.mfdf.mse[r]),
                    fmt_f64(c.gp.mse[r]),
                ]
            })
            .collect(),
    )?;
    let test = &c.predictions.split.hf_test;
    let mut scatter = vec![];
    for (k, &row) in test.iter().enumerate() {
        for r in 0..c.mfdf.mse.len() {
            scatter.push(vec![
                row.to_string(),
                (r + 1).to_string(),
                fmt_f64(ctx.lf.responses[row].0[r]),
                fmt_f64(ctx.hf.responses[row].0[r]),
                fmt_f64(c.predictions.mfdf[k][r]),
                fmt_f64(c.predictions.gp[k][r]),
            ]);
        }
    }
    out(
        "scatter.csv".into(),
        &["sample", "freq_point", "lf", "hf", "pred_mfdfcnn", "pred_mlmrgp"],
        scatter,
    )?;
    out(
        "curve_rows.csv".into(),
        &["curve", "sample"],
        c.curve_rows
            .iter()
            .enumerate()
            .map(|(k, s)| vec![(k + 1).to_string(), s.to_string()])
            .collect(),
    )?;
    for (k, &row) in c.curve_rows.iter().enumerate() {
        let at = test.binary_search(&row).expect("curve rows come from the test set");
        out(
            format!("curves_{}.csv", k + 1),
            &["freq_hz", "lf", "hf", "pred_mfdfcnn", "pred_mlmrgp"],
            (0..c.mfdf.mse.len())
                .map(|r| {
                    vec![
                        fmt_f64(freq_of(r)),
                        fmt_f64(ctx.lf.responses[row].0[r]),
                        fmt_f64(ctx.hf.responses[row].0[r]),
                        fmt_f64(c.predictions.mfdf[at][r]),
                        fmt_f64(c.predictions.gp[at][r]),
                    ]
                })
                .collect(),
        )?;
    }
    Ok(files)
}

pub fn write_robustness(studies: &[StudyReport], dir: &Path) -> Result<String> {
    let rows: Vec<Vec<String>> = studies
        .iter()
        .flat_map(|s| s.runs.iter())
        .flat_map(|rep| {
            rep.log_mse.iter().enumerate().map(move |(r, v)| {
                vec![
                    (rep.run + 1).to_string(),
                    (r + 1).to_string(),
                    rep.emulator.tag().to_string(),
                    fmt_f64(*v),
                ]
            })
        })
        .collect();
    let name = "robustness.csv".to_string();
    write_csv(&dir.join(&name), &header(&["run", "freq_point", "emulator", "log_mse"]), rows)?;
    Ok(name)
}

pub fn write_sweep(points: &[SweepPoint], kind: StudyKind, dir: &Path) -> Result<String> {
    let (name, first) = match kind {
        StudyKind::Alpha => ("sweep_alpha.csv", "alpha"),
        _ => ("sweep_hf.csv", "hf_fraction"),
    };
    let rows: Vec<Vec<String>> = points
        .iter()
        .flat_map(|p| {
            p.reports.iter().flat_map(move |rep| {
                rep.log_mse.iter().enumerate().map(move |(r, v)| {
                    vec![
                        fmt_f64(p.value),
                        p.hf_count.to_string(),
                        (r + 1).to_string(),
                        rep.emulator.tag().to_string(),
                        fmt_f64(*v),
                    ]
                })
            })
        })
        .collect();
    write_csv(
        &dir.join(name),
        &header(&[first, "hf_count", "freq_point", "emulator", "log_mse"]),
        rows,
    )?;
    Ok(name.to_string())
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Mean over points of a log-error vector; one `-inf` entry makes it `-inf`.
pub fn point_average(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
