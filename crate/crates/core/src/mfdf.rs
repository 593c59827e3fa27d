//! Composite multi-fidelity network: a low-fidelity stage followed by a
//! linear and a nonlinear passage on `[x, ŷ¹]`, merged as
//! `ŷ² = α·v_L + (1 − α)·v_NL`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FidelityDataset, NestedSplit};
use crate::error::{Error, Result};
use crate::fem::UncertainInput;
use crate::nn::{grad_slices, load_networks, save_networks, Activation, AdamConfig, AdamState, LayerGrad, Mlp, Trace};
use crate::response::ResponseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// Weighted sum of the two squared error norms.
    Separable,
    /// Square of the weighted sum of the two error norms.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeNetConfig {
    pub input_dim: usize,
    pub stage1_widths: Vec<usize>,
    pub lf_output: usize,
    pub linear_widths: Vec<usize>,
    pub nonlinear_widths: Vec<usize>,
    pub hf_output: usize,
    pub alpha: f64,
}

impl Default for CompositeNetConfig {
    fn default() -> Self {
        Self {
            input_dim: 12,
            stage1_widths: vec![512, 512, 512],
            lf_output: 10,
            linear_widths: vec![256, 256],
            nonlinear_widths: vec![256, 256, 256],
            hf_output: 10,
            alpha: 0.6,
        }
    }
}

impl CompositeNetConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = self
            .stage1_widths
            .iter()
            .chain(&self.linear_widths)
            .chain(&self.nonlinear_widths)
            .chain([&self.input_dim, &self.lf_output, &self.hf_output]);
        if widths.into_iter().any(|w| *w == 0) {
            return Err(Error::Domain("network widths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeNet {
    pub stage1: Mlp,
    pub linear: Mlp,
    pub nonlinear: Mlp,
    pub alpha: f64,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain([output]).collect()
}

/// Glorot-initialized network: stage 1, then the linear and the nonlinear
/// passage, drawn in that order from one seeded stream.
pub fn build_composite(cfg: &CompositeNetConfig, seed: u64) -> Result<CompositeNet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let concat = cfg.input_dim + cfg.lf_output;
    let stage1 = Mlp::glorot(
        &widths(cfg.input_dim, &cfg.stage1_widths, cfg.lf_output),
        Activation::Relu,
        Activation::Linear,
        &mut rng,
    );
    let linear = Mlp::glorot(
        &widths(concat, &cfg.linear_widths, cfg.hf_output),
        Activation::Linear,
        Activation::Linear,
        &mut rng,
    );
    let nonlinear = Mlp::glorot(
        &widths(concat, &cfg.nonlinear_widths, cfg.hf_output),
        Activation::Relu,
        Activation::Linear,
        &mut rng,
    );
    Ok(CompositeNet {
        stage1,
        linear,
        nonlinear,
        alpha: cfg.alpha,
    })
}

/// Intermediate values of one composite forward pass.
#[derive(Debug, Clone)]
pub struct CompositeTrace {
    pub stage1: Trace,
    pub linear: Trace,
    pub nonlinear: Trace,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
}

impl CompositeNet {
    pub fn param_count(&self) -> usize {
        self.stage1.param_count() + self.linear.param_count() + self.nonlinear.param_count()
    }

    pub fn input_dim(&self) -> usize {
        self.stage1.input_dim()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.stage1.params();
        p.extend(self.linear.params());
        p.extend(self.nonlinear.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.stage1.params_mut();
        p.extend(self.linear.params_mut());
        p.extend(self.nonlinear.params_mut());
        p
    }

    /// Forward pass over a batch (one column per row).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<CompositeTrace> {
        let stage1 = self.stage1.forward(x)?;
        let y1 = stage1.output().clone();
        let concat = concat_rows(x, &y1);
        let linear = self.linear.forward(&concat)?;
        let nonlinear = self.nonlinear.forward(&concat)?;
        let y2 = linear.output() * self.alpha + nonlinear.output() * (1.0 - self.alpha);
        Ok(CompositeTrace {
            stage1,
            linear,
            nonlinear,
            y1,
            y2,
        })
    }

    /// Parameter gradients (in [`CompositeNet::params`] order) given the loss
    /// gradients at both outputs. The HF gradient reaches stage 1 through `ŷ¹`.
    pub fn backward(&self, trace: &CompositeTrace, g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> Vec<LayerGrad> {
        let (gl, dl) = self.linear.backward(&trace.linear, &(g2 * self.alpha));
        let (gnl, dnl) = self.nonlinear.backward(&trace.nonlinear, &(g2 * (1.0 - self.alpha)));
        let d = dl + dnl;
        let n_in = self.input_dim();
        let g1_total = g1 + d.rows(n_in, d.nrows() - n_in);
        let (mut grads, _) = self.stage1.backward(&trace.stage1, &g1_total);
        grads.extend(gl);
        grads.extend(gnl);
        grads
    }
}

fn concat_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Per-row sample weights `(β¹, β²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleWeights {
    pub lf: f64,
    pub hf: f64,
}

/// The `mfdf_cnn` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfdfConfig {
    #[serde(default = "d_stage1")]
    pub stage1_widths: Vec<usize>,
    #[serde(default = "d_linear")]
    pub linear_widths: Vec<usize>,
    #[serde(default = "d_nonlinear")]
    pub nonlinear_widths: Vec<usize>,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_real")]
    pub real_weights: SampleWeights,
    #[serde(default = "d_pseudo")]
    pub pseudo_weights: SampleWeights,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "d_loss")]
    pub loss_form: LossForm,
    /// z-score inputs and outputs with LF-train statistics.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn d_stage1() -> Vec<usize> {
    vec![512, 512, 512]
}
fn d_linear() -> Vec<usize> {
    vec![256, 256]
}
fn d_nonlinear() -> Vec<usize> {
    vec![256, 256, 256]
}
fn d_alpha() -> f64 {
    0.6
}
fn d_gamma() -> f64 {
    0.8
}
fn d_real() -> SampleWeights {
    SampleWeights { lf: 0.5, hf: 2.0 }
}
fn d_pseudo() -> SampleWeights {
    SampleWeights { lf: 0.5, hf: 1e-5 }
}
fn d_epochs() -> usize {
    40
}
fn d_batch() -> usize {
    5
}
fn d_loss() -> LossForm {
    LossForm::Separable
}

impl Default for MfdfConfig {
    fn default() -> Self {
        Self {
            stage1_widths: d_stage1(),
            linear_widths: d_linear(),
            nonlinear_widths: d_nonlinear(),
            alpha: d_alpha(),
            gamma: d_gamma(),
            real_weights: d_real(),
            pseudo_weights: d_pseudo(),
            epochs: d_epochs(),
            batch: d_batch(),
            seed: None,
            loss_form: d_loss(),
            standardize: false,
            adam: AdamConfig::default(),
        }
    }
}

impl MfdfConfig {
    pub fn net_config(&self, input_dim: usize, output_dim: usize) -> CompositeNetConfig {
        CompositeNetConfig {
            input_dim,
            stage1_widths: self.stage1_widths.clone(),
            lf_output: output_dim,
            linear_widths: self.linear_widths.clone(),
            nonlinear_widths: self.nonlinear_widths.clone(),
            hf_output: output_dim,
            alpha: self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        let w = [self.real_weights, self.pseudo_weights];
        if w.iter().any(|s| !(s.lf >= 0.0 && s.hf >= 0.0)) {
            return Err(Error::Domain("sample weights must be non-negative".into()));
        }
        if self.batch == 0 {
            return Err(Error::Domain("batch size must be positive".into()));
        }
        self.net_config(1, 1).validate()
    }
}

/// LF-train rows with HF labels, padded by LF copies where no HF run exists.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTrainingSet {
    pub x: Vec<Vec<f64>>,
    pub y1: Vec<Vec<f64>>,
    pub y2: Vec<Vec<f64>>,
    pub is_pseudo: Vec<bool>,
    pub weights: Vec<SampleWeights>,
}

impl FusedTrainingSet {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn pseudo_count(&self) -> usize {
        self.is_pseudo.iter().filter(|p| **p).count()
    }
}

pub fn fill_pseudo_high_fidelity(
    split: &NestedSplit,
    lf: &FidelityDataset,
    hf: &FidelityDataset,
    real: SampleWeights,
    pseudo: SampleWeights,
) -> Result<FusedTrainingSet> {
    let mut set = FusedTrainingSet {
        x: vec![],
        y1: vec![],
        y2: vec![],
        is_pseudo: vec![],
        weights: vec![],
    };
    for &h in &split.hf_train {
        if split.lf_train.binary_search(&h).is_err() {
            return Err(Error::Consistency(format!("HF-train row {h} has no LF-train partner")));
        }
    }
    for &i in &split.lf_train {
        let (Some(t), Some(y1)) = (lf.thetas.get(i), lf.responses.get(i)) else {
            return Err(Error::Consistency(format!("LF-train row {i} missing from the LF dataset")));
        };
        let real_hf = split.hf_train.binary_search(&i).is_ok();
        let y2 = if real_hf {
            if hf.thetas.get(i) != Some(t) {
                return Err(Error::Consistency(format!("HF row {i} is not paired with its LF row")));
            }
            hf.responses[i].0.clone()
        } else {
            y1.0.clone()
        };
        set.x.push(t.0.to_vec());
        set.y1.push(y1.0.clone());
        set.y2.push(y2);
        set.is_pseudo.push(!real_hf);
        set.weights.push(if real_hf { real } else { pseudo });
    }
    Ok(set)
}

/// Weighted batch loss and its gradients at both outputs.
pub fn batch_loss(
    y1_hat: &DMatrix<f64>,
    y2_hat: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    y2: &DMatrix<f64>,
    weights: &[SampleWeights],
    gamma: f64,
    form: LossForm,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let b = weights.len() as f64;
    let e1 = y1 - y1_hat;
    let e2 = y2 - y2_hat;
    let mut g1 = DMatrix::zeros(e1.nrows(), e1.ncols());
    let mut g2 = DMatrix::zeros(e2.nrows(), e2.ncols());
    let mut loss = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let (c1, c2) = (gamma * w.lf, (1.0 - gamma) * w.hf);
        match form {
            LossForm::Separable => {
                loss += c1 * e1.column(i).norm_squared() + c2 * e2.column(i).norm_squared();
                g1.set_column(i, &(e1.column(i) * (-2.0 * c1 / b)));
                g2.set_column(i, &(e2.column(i) * (-2.0 * c2 / b)));
            }
            LossForm::Combined => {
                let (n1, n2) = (e1.column(i).norm(), e2.column(i).norm());
                let eta = c1 * n1 + c2 * n2;
                loss += eta * eta;
                if n1 > 0.0 {
                    g1.set_column(i, &(e1.column(i) * (-2.0 * eta * c1 / (b * n1))));
                }
                if n2 > 0.0 {
                    g2.set_column(i, &(e2.column(i) * (-2.0 * eta * c2 / (b * n2))));
                }
            }
        }
    }
    (loss / b, g1, g2)
}

/// Affine maps applied to inputs and outputs before the network sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

impl Scaler {
    pub fn identity(nx: usize, ny: usize) -> Self {
        Self {
            x_mean: vec![0.0; nx],
            x_std: vec![1.0; nx],
            y_mean: vec![0.0; ny],
            y_std: vec![1.0; ny],
        }
    }

    /// Column means and standard deviations of the LF-train inputs and LF labels.
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>]) -> Self {
        fn stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
            let n = rows.len() as f64;
            let d = rows.first().map_or(0, Vec::len);
            let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            let std = (0..d)
                .map(|j| {
                    let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                    if v > 0.0 {
                        v.sqrt()
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, std)
        }
        let (x_mean, x_std) = stats(x);
        let (y_mean, y_std) = stats(y);
        Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    fn to_matrix(rows: &[&[f64]], mean: &[f64], std: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(mean.len(), rows.len(), |j, i| (rows[i][j] - mean[j]) / std[j])
    }

    pub fn x_matrix(&self, rows: &[&[f64]]) -> DMatrix<f64> {
        Self::to_matrix(rows, &self.x_mean, &self.x_std)
    }

    pub fn y_matrix(&self, rows: &[&[f64]]) -> DMatrix<f64> {
        Self::to_matrix(rows, &self.y_mean, &self.y_std)
    }

    pub fn y_rows(&self, m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.column_iter()
            .map(|c| c.iter().enumerate().map(|(j, v)| v * self.y_std[j] + self.y_mean[j]).collect())
            .collect()
    }
}

/// Trained network plus the scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct MfdfModel {
    pub net: CompositeNet,
    pub scaler: Scaler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Loss over the whole training set before the first update.
    pub initial_loss: f64,
    /// Mean batch loss (row-weighted) per epoch.
    pub epoch_losses: Vec<f64>,
}

fn full_loss(model: &MfdfModel, set: &FusedTrainingSet, cfg: &MfdfConfig) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let (x, y1, y2, w) = gather(&model.scaler, set, &idx);
    let t = model.net.forward(&x)?;
    Ok(batch_loss(&t.y1, &t.y2, &y1, &y2, &w, cfg.gamma, cfg.loss_form).0)
}

fn gather(
    s: &Scaler,
    set: &FusedTrainingSet,
    idx: &[usize],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<SampleWeights>) {
    fn pick<'a>(v: &'a [Vec<f64>], idx: &[usize]) -> Vec<&'a [f64]> {
        idx.iter().map(|&i| v[i].as_slice()).collect()
    }
    (
        s.x_matrix(&pick(&set.x, idx)),
        s.y_matrix(&pick(&set.y1, idx)),
        s.y_matrix(&pick(&set.y2, idx)),
        idx.iter().map(|&i| set.weights[i]).collect(),
    )
}

/// Adam over seeded, reshuffled mini-batches. The seed drives both the
/// initialization and the batch order.
pub fn train_composite(set: &FusedTrainingSet, cfg: &MfdfConfig, seed: u64) -> Result<(MfdfModel, TrainingReport)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let (nx, ny) = (set.x[0].len(), set.y1[0].len());
    let net = build_composite(&cfg.net_config(nx, ny), seed)?;
    let scaler = if cfg.standardize {
        Scaler::fit(&set.x, &set.y1)
    } else {
        Scaler::identity(nx, ny)
    };
    let mut model = MfdfModel { net, scaler };
    let initial_loss = full_loss(&model, set, cfg)?;
    let mut adam = AdamState::new(cfg.adam, &model.net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0bad_5eed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch).enumerate() {
            let (x, y1, y2, w) = gather(&model.scaler, set, idx);
            let trace = model.net.forward(&x)?;
            let (loss, g1, g2) = batch_loss(&trace.y1, &trace.y2, &y1, &y2, &w, cfg.gamma, cfg.loss_form);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, loss });
            }
            total += loss * idx.len() as f64;
            let grads = model.net.backward(&trace, &g1, &g2);
            adam.update(model.net.params_mut(), &grad_slices(&grads))?;
        }
        epoch_losses.push(total / set.len() as f64);
    }
    Ok((
        model,
        TrainingReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

impl MfdfModel {
    /// `(ŷ¹, ŷ²)` for every θ row, in physical units.
    pub fn predict(&self, thetas: &[UncertainInput]) -> Result<(Vec<ResponseVector>, Vec<ResponseVector>)> {
        if thetas.is_empty() {
            return Ok((vec![], vec![]));
        }
        let rows: Vec<&[f64]> = thetas.iter().map(|t| t.0.as_slice()).collect();
        let t = self.net.forward(&self.scaler.x_matrix(&rows))?;
        let wrap = |m: &DMatrix<f64>| self.scaler.y_rows(m).into_iter().map(ResponseVector).collect();
        Ok((wrap(&t.y1), wrap(&t.y2)))
    }

    /// `<stem>.json` + `<stem>.bin`.
    pub fn save(&self, stem: &Path, config: &MfdfConfig) -> Result<()> {
        let extra = serde_json::json!({
            "alpha": self.net.alpha,
            "scaler": self.scaler,
            "config": config,
        });
        save_networks(
            stem,
            &[
                ("stage1", &self.net.stage1),
                ("linear", &self.net.linear),
                ("nonlinear", &self.net.nonlinear),
            ],
            extra,
        )
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (nets, extra) = load_networks(stem)?;
        let bad = || Error::Format(format!("{}: not a composite network", stem.display()));
        let mut it = nets.into_iter();
        let mut take = |name: &str| match it.next() {
            Some((n, net)) if n == name => Ok(net),
            _ => Err(bad()),
        };
        let (stage1, linear, nonlinear) = (take("stage1")?, take("linear")?, take("nonlinear")?);
        let alpha = extra["alpha"].as_f64().ok_or_else(bad)?;
        let scaler: Scaler = serde_json::from_value(extra["scaler"].clone()).map_err(|_| bad())?;
        Ok(Self {
            net: CompositeNet {
                stage1,
                linear,
                nonlinear,
                alpha,
            },
            scaler,
        })
    }
}
