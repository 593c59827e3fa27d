//! Dense feed-forward networks with reverse-mode gradients, Glorot
//! initialization, Adam, and a bitwise weight file format.
//!
//! Batches are matrices with one column per sample.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::write_json;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        if self == Activation::Relu {
            z.apply(|v| *v = v.max(0.0));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out × in
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
            activation,
        }
    }

    /// Weights uniform on ±√(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite Glorot bound");
        Self {
            weights: DMatrix::from_fn(output, input, |_, _| dist.sample(rng)),
            bias: DVector::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        self.activation.apply(&mut z);
        z
    }
}

/// Gradient of one layer, shaped like it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer inputs and outputs of a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[k + 1]` the output of layer k.
    pub activations: Vec<DMatrix<f64>>,
}

impl Trace {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("trace holds the input")
    }
}

impl Mlp {
    /// `widths = [in, h1, …, out]`; `hidden` activates every layer but the
    /// last, which uses `last`.
    pub fn glorot<R: Rng>(widths: &[usize], hidden: Activation, last: Activation, rng: &mut R) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n { last } else { hidden };
                DenseLayer::glorot(widths[k], widths[k + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<Trace> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = &activations[k];
            if input.nrows() != layer.input_dim() {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs, got {}",
                    layer.input_dim(),
                    input.nrows()
                )));
            }
            let out = layer.forward(input);
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut t = self.forward(x)?;
        Ok(t.activations.pop().expect("trace holds the input"))
    }

    /// Reverse pass from `dL/d(output)`; returns per-layer gradients and
    /// `dL/d(input)`. ReLU passes no gradient where its output is 0.
    pub fn backward(&self, trace: &Trace, grad_out: &DMatrix<f64>) -> (Vec<LayerGrad>, DMatrix<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                delta.zip_apply(&trace.activations[k + 1], |d, y| {
                    if y <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let input = &trace.activations[k];
            grads.push(LayerGrad {
                weights: &delta * input.transpose(),
                bias: delta.column_sum(),
            });
            delta = layer.weights.transpose() * &delta;
        }
        grads.reverse();
        (grads, delta)
    }

    /// Every parameter as a flat slice, weights (column-major) then bias, per layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

/// Flattens gradients in the order of [`Mlp::params`].
pub fn grad_slices(grads: &[LayerGrad]) -> Vec<&[f64]> {
    grads
        .iter()
        .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&[f64]]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("Adam state does not match the parameter set".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape("gradient block does not match its parameters".into()));
            }
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

const WEIGHTS_FORMAT: &str = "vibefuse-weights";
const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsManifest {
    format: String,
    version: u32,
    payload: String,
    networks: Vec<(String, Vec<LayerEntry>)>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Writes `<stem>.json` (shapes, activations, `extra`) and `<stem>.bin`
/// (little-endian f64: per layer the column-major weights, then the bias).
pub fn save_networks(stem: &Path, nets: &[(&str, &Mlp)], extra: serde_json::Value) -> Result<()> {
    let bin = stem.with_extension("bin");
    let mut bytes = Vec::new();
    let mut networks = Vec::new();
    for (name, net) in nets {
        for p in net.params() {
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let layers = net
            .layers
            .iter()
            .map(|l| LayerEntry {
                inputs: l.input_dim(),
                outputs: l.output_dim(),
                activation: l.activation,
            })
            .collect();
        networks.push(((*name).to_owned(), layers));
    }
    if let Some(parent) = bin.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    let payload = bin
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_json(
        &stem.with_extension("json"),
        &WeightsManifest {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            payload,
            networks,
            extra,
        },
    )
}

/// Inverse of [`save_networks`]: the named networks and the `extra` value.
pub fn load_networks(stem: &Path) -> Result<(Vec<(String, Mlp)>, serde_json::Value)> {
    let json = stem.with_extension("json");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let manifest: WeightsManifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", json.display())))?;
    if manifest.format != WEIGHTS_FORMAT || manifest.version != WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "{}: expected {WEIGHTS_FORMAT} v{WEIGHTS_VERSION}",
            json.display()
        )));
    }
    let bin = json.with_file_name(&manifest.payload);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let expected: usize = manifest
        .networks
        .iter()
        .flat_map(|(_, ls)| ls.iter().map(|l| l.inputs * l.outputs + l.outputs))
        .sum();
    if bytes.len() != 8 * expected {
        return Err(Error::Format(format!(
            "{}: payload holds {} bytes, manifest needs {}",
            bin.display(),
            bytes.len(),
            8 * expected
        )));
    }
    let mut nets = Vec::new();
    for (name, entries) in manifest.networks {
        let layers = entries
            .iter()
            .map(|e| {
                let w: Vec<f64> = values.by_ref().take(e.inputs * e.outputs).collect();
                let b: Vec<f64> = values.by_ref().take(e.outputs).collect();
                DenseLayer {
                    weights: DMatrix::from_vec(e.outputs, e.inputs, w),
                    bias: DVector::from_vec(b),
                    activation: e.activation,
                }
            })
            .collect();
        nets.push((name, Mlp { layers }));
    }
    Ok((nets, manifest.extra))
}
