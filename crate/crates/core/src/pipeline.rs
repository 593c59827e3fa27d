//! Stage-by-stage orchestration over one artifact directory. Every stage
//! records its outputs in the directory manifest with the config hash and a
//! key over the config sections they depend on; later stages reuse upstream
//! artifacts only when that key still matches and the file is unchanged.

use std::fs;
use std::path::{Path, PathBuf};

use crate::artifact::{fmt_f64, parse_f64, read_csv, read_json, sha256_hex, write_csv, write_json, Manifest};
use crate::config::{PipelineConfig, Seeds};
use crate::dataset::{
    generate_datasets, load_dataset, save_dataset, split_nested, summarize, write_summary, FidelityDataset,
    NestedSplit, TwoFidelityModel, HISTOGRAM_BINS,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare_predictions, run_alpha, run_hf_fraction, run_robustness, test_rows, write_comparison, write_robustness,
    write_sweep, Comparison, SplitPredictions, StudyContext, StudyKind, StudyReport, SweepPoint,
};
use crate::fem::{natural_frequencies, realize_system, FemModel, UncertainInput, PARAM_COUNT};
use crate::guyan::{condense, reduced_natural_frequencies};
use crate::mfdf::{fill_pseudo_high_fidelity, train_composite, MfdfModel, TrainingReport};
use crate::mlmrgp::{fit_from_split, MlmrgpModel};
use crate::sampling::lhs_normal_samples;

pub const SAMPLES: &str = "samples.csv";
pub const SPLIT: &str = "split.json";
pub const MFDF_STEM: &str = "mfdfcnn";
pub const GP_MODEL: &str = "mlmrgp.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const MODES: &str = "natural_frequencies.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct MeshReport {
    pub dofs: usize,
    /// Zero for free-free models.
    pub masters: usize,
    pub full_hz: Vec<f64>,
    pub guyan_hz: Vec<f64>,
}

/// Artifact groups by the config sections they depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Model,
    Samples,
    Data,
    Split,
    Mfdf,
    Gp,
    Full,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
    hash: String,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self> {
        let out = out.into();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let hash = config.hash();
        Ok(Self { config, out, hash })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn seeds(&self) -> Seeds {
        self.config.seeds()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Hash of the config sections an artifact of `stage` depends on, so that
    /// changing a downstream setting keeps upstream artifacts reusable.
    fn key(&self, stage: Stage) -> String {
        if stage == Stage::Full {
            return self.hash.clone();
        }
        let mut parts = vec![];
        self.key_parts(stage, &mut parts);
        sha256_hex(&serde_json::to_vec(&parts).expect("config serializes"))
    }

    fn key_parts(&self, stage: Stage, parts: &mut Vec<serde_json::Value>) {
        let c = &self.config;
        let s = self.seeds();
        let v = |x: serde_json::Result<serde_json::Value>| x.expect("config serializes");
        match stage {
            Stage::Model => parts.extend([v(serde_json::to_value(&c.model)), v(serde_json::to_value(&c.reduction))]),
            Stage::Samples => parts.extend([v(serde_json::to_value(&c.sampling)), s.sampling.into()]),
            Stage::Data => {
                self.key_parts(Stage::Model, parts);
                self.key_parts(Stage::Samples, parts);
            }
            Stage::Split => {
                self.key_parts(Stage::Data, parts);
                parts.extend([v(serde_json::to_value(&c.split)), s.split.into()]);
            }
            Stage::Mfdf => {
                self.key_parts(Stage::Split, parts);
                parts.extend([v(serde_json::to_value(&c.mfdf_cnn)), s.mfdf.into()]);
            }
            Stage::Gp => {
                self.key_parts(Stage::Split, parts);
                parts.extend([v(serde_json::to_value(&c.mlmrgp)), s.gp.into()]);
            }
            Stage::Full => parts.push(self.hash.clone().into()),
        }
    }

    fn record(&self, stage: Stage, names: &[&str]) -> Result<()> {
        Manifest::open(&self.out)?.record(&self.out, &self.hash, &self.key(stage), names)
    }

    /// True when every named file was recorded under the current key of
    /// `stage` and is unchanged on disk.
    fn current(&self, stage: Stage, names: &[&str]) -> Result<bool> {
        let m = Manifest::open(&self.out)?;
        let key = self.key(stage);
        Ok(names.iter().all(|n| m.is_current(&self.out, n, &key)))
    }

    fn two_fidelity(&self) -> Result<TwoFidelityModel> {
        let fem = FemModel::build(&self.config.model).map_err(|e| e.in_module("fem"))?;
        TwoFidelityModel::new(fem, &self.config.reduction).map_err(|e| e.in_module("guyan"))
    }

    /// Builds the model, compares full and reduced natural frequencies of
    /// the nominal system and writes `natural_frequencies.csv`.
    ///
    /// Free-free models have rigid-body modes and a singular slave block, so
    /// their comparison table is left empty.
    pub fn mesh(&self) -> Result<MeshReport> {
        let fem = FemModel::build(&self.config.model).map_err(|e| e.in_module("fem"))?;
        let (masters, full_hz, guyan_hz) = if fem.mesh.fixed.iter().any(|f| *f) {
            let model = TwoFidelityModel::new(fem.clone(), &self.config.reduction).map_err(|e| e.in_module("guyan"))?;
            let nominal = realize_system(&fem.system, &UncertainInput::nominal())?;
            let modes = self.config.model.modes.min(model.partition.dim());
            let full_hz = natural_frequencies(&nominal, modes).map_err(|e| e.in_module("fem"))?;
            let reduced = condense(&nominal, &model.partition).map_err(|e| e.in_module("guyan"))?;
            let guyan_hz = reduced_natural_frequencies(&reduced, modes).map_err(|e| e.in_module("guyan"))?;
            (model.partition.masters().len(), full_hz, guyan_hz)
        } else {
            (0, vec![], vec![])
        };
        write_csv(
            &self.path(MODES),
            &header(&["mode", "full_hz", "guyan_hz", "rel_error"]),
            full_hz.iter().zip(&guyan_hz).enumerate().map(|(i, (f, g))| {
                vec![(i + 1).to_string(), fmt_f64(*f), fmt_f64(*g), fmt_f64((g - f) / f)]
            }),
        )?;
        self.record(Stage::Model, &[MODES])?;
        Ok(MeshReport {
            dofs: fem.dofs(),
            masters,
            full_hz,
            guyan_hz,
        })
    }

    pub fn sample(&self) -> Result<Vec<UncertainInput>> {
        let spec = self.config.sampling.spec(self.seeds().sampling);
        let rows = lhs_normal_samples(&spec).map_err(|e| e.in_module("sampling"))?;
        write_csv(
            &self.path(SAMPLES),
            &(1..=PARAM_COUNT).map(|i| format!("theta_{i}")).collect::<Vec<_>>(),
            rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()),
        )?;
        self.record(Stage::Samples, &[SAMPLES])?;
        rows.iter().map(|r| UncertainInput::from_slice(r)).collect()
    }

    fn samples(&self) -> Result<Vec<UncertainInput>> {
        if !self.current(Stage::Samples, &[SAMPLES])? {
            return self.sample();
        }
        let path = self.path(SAMPLES);
        let (_, rows) = read_csv(&path)?;
        rows.iter()
            .map(|r| {
                let v = r.iter().map(|s| parse_f64(s, &path)).collect::<Result<Vec<_>>>()?;
                UncertainInput::from_slice(&v)
            })
            .collect()
    }

    /// Both fidelity datasets plus their summary files.
    pub fn simulate(&self) -> Result<(FidelityDataset, FidelityDataset)> {
        let thetas = self.samples()?;
        let model = self.two_fidelity()?;
        let (hf, lf) = generate_datasets(&model, &thetas, self.seeds().sampling, &self.key(Stage::Data))
            .map_err(|e| e.in_module("simulate"))?;
        let mut files = vec![];
        for (ds, stem) in [(&hf, "hf"), (&lf, "lf")] {
            save_dataset(ds, &self.path(&format!("{stem}.csv")))?;
            files.push(format!("{stem}.csv"));
            files.push(format!("{stem}.json"));
            files.extend(write_summary(&summarize(ds, HISTOGRAM_BINS)?, &self.out, &format!("{stem}_summary"))?);
        }
        self.record(Stage::Data, &files.iter().map(String::as_str).collect::<Vec<_>>())?;
        Ok((hf, lf))
    }

    pub fn datasets(&self) -> Result<(FidelityDataset, FidelityDataset)> {
        if self.current(Stage::Data, &["hf.csv", "hf.json", "lf.csv", "lf.json"])? {
            Ok((load_dataset(&self.path("hf.csv"))?, load_dataset(&self.path("lf.csv"))?))
        } else {
            self.simulate()
        }
    }

    pub fn split(&self) -> Result<NestedSplit> {
        let (hf, lf) = self.datasets()?;
        self.split_on(&hf, &lf)
    }

    fn split_on(&self, hf: &FidelityDataset, lf: &FidelityDataset) -> Result<NestedSplit> {
        let s = &self.config.split;
        let split = split_nested(hf, lf, s.lf_train, s.hf_train, self.seeds().split).map_err(|e| e.in_module("split"))?;
        write_json(&self.path(SPLIT), &split)?;
        self.record(Stage::Split, &[SPLIT])?;
        Ok(split)
    }

    /// The recorded split, drawn afresh when missing or stale.
    pub fn current_split(&self, hf: &FidelityDataset, lf: &FidelityDataset) -> Result<NestedSplit> {
        if self.current(Stage::Split, &[SPLIT])? {
            read_json(&self.path(SPLIT))
        } else {
            self.split_on(hf, lf)
        }
    }

    pub fn train_mfdf(&self) -> Result<(MfdfModel, TrainingReport)> {
        let (hf, lf) = self.datasets()?;
        let split = self.current_split(&hf, &lf)?;
        let cfg = &self.config.mfdf_cnn;
        let set = fill_pseudo_high_fidelity(&split, &lf, &hf, cfg.real_weights, cfg.pseudo_weights)?;
        let (model, report) = train_composite(&set, cfg, self.seeds().mfdf).map_err(|e| e.in_module("mfdf-cnn"))?;
        model.save(&self.path(MFDF_STEM), cfg)?;
        let curve = "mfdfcnn_training.csv";
        write_csv(
            &self.path(curve),
            &header(&["epoch", "loss"]),
            std::iter::once(vec!["0".to_string(), fmt_f64(report.initial_loss)]).chain(
                report
                    .epoch_losses
                    .iter()
                    .enumerate()
                    .map(|(e, l)| vec![(e + 1).to_string(), fmt_f64(*l)]),
            ),
        )?;
        self.record(Stage::Mfdf, &["mfdfcnn.json", "mfdfcnn.bin", curve])?;
        Ok((model, report))
    }

    pub fn train_gp(&self) -> Result<MlmrgpModel> {
        let (hf, lf) = self.datasets()?;
        let split = self.current_split(&hf, &lf)?;
        let model =
            fit_from_split(&hf, &lf, &split, &self.config.mlmrgp, self.seeds().gp).map_err(|e| e.in_module("mlmrgp"))?;
        model.save(&self.path(GP_MODEL), &self.config.mlmrgp)?;
        self.record(Stage::Gp, &[GP_MODEL])?;
        Ok(model)
    }

    /// The saved emulators, retrained when missing or stale.
    pub fn models(&self) -> Result<(MfdfModel, MlmrgpModel)> {
        let mfdf = if self.current(Stage::Mfdf, &["mfdfcnn.json", "mfdfcnn.bin"])? {
            MfdfModel::load(&self.path(MFDF_STEM))?
        } else {
            self.train_mfdf()?.0
        };
        let gp = if self.current(Stage::Gp, &[GP_MODEL])? {
            MlmrgpModel::load(&self.path(GP_MODEL))?
        } else {
            self.train_gp()?
        };
        Ok((mfdf, gp))
    }

    fn test_predictions(&self) -> Result<(FidelityDataset, FidelityDataset, SplitPredictions)> {
        let (hf, lf) = self.datasets()?;
        let split = self.current_split(&hf, &lf)?;
        let (mfdf, gp) = self.models()?;
        let (thetas, _) = test_rows(&hf, &split);
        let mf = mfdf.predict(&thetas)?.1.into_iter().map(|r| r.0).collect();
        let g = gp.predict(&thetas)?.mean.into_iter().map(|r| r.0).collect();
        Ok((
            hf,
            lf,
            SplitPredictions {
                split,
                mfdf: mf,
                gp: g,
            },
        ))
    }

    /// Both emulators' predictions on the HF-test rows: `predictions.csv`.
    pub fn predict(&self) -> Result<SplitPredictions> {
        let (hf, _, p) = self.test_predictions()?;
        let rows = p.split.hf_test.iter().enumerate().flat_map(|(k, &i)| {
            let (hf, p) = (&hf, &p);
            (0..hf.response_len()).map(move |r| {
                vec![
                    i.to_string(),
                    (r + 1).to_string(),
                    fmt_f64(hf.responses[i].0[r]),
                    fmt_f64(p.mfdf[k][r]),
                    fmt_f64(p.gp[k][r]),
                ]
            })
        });
        write_csv(
            &self.path(PREDICTIONS),
            &header(&["sample", "freq_point", "hf", "pred_mfdfcnn", "pred_mlmrgp"]),
            rows.collect::<Vec<_>>(),
        )?;
        self.record(Stage::Full, &[PREDICTIONS])?;
        Ok(p)
    }

    /// Scores the trained emulators and writes the comparison artifacts.
    pub fn evaluate(&self) -> Result<Comparison> {
        let (hf, lf, p) = self.test_predictions()?;
        let ctx = self.context(&hf, &lf);
        let c = compare_predictions(&ctx, p)?;
        let files = write_comparison(&c, &ctx, &self.out)?;
        self.record(Stage::Full, &files.iter().map(String::as_str).collect::<Vec<_>>())?;
        Ok(c)
    }

    fn context<'a>(&'a self, hf: &'a FidelityDataset, lf: &'a FidelityDataset) -> StudyContext<'a> {
        let s = self.seeds();
        StudyContext {
            hf,
            lf,
            lf_train: self.config.split.lf_train,
            hf_train: self.config.split.hf_train,
            split_seed: s.split,
            mfdf: &self.config.mfdf_cnn,
            mfdf_seed: s.mfdf,
            gp: &self.config.mlmrgp,
            gp_seed: s.gp,
            eval: &self.config.eval,
            eval_seed: s.eval,
        }
    }

    pub fn robustness(&self) -> Result<[StudyReport; 2]> {
        let (hf, lf) = self.datasets()?;
        let studies = run_robustness(&self.context(&hf, &lf))?;
        let name = write_robustness(&studies, &self.out)?;
        self.record(Stage::Full, &[&name])?;
        Ok(studies)
    }

    pub fn hf_fraction(&self) -> Result<Vec<SweepPoint>> {
        let (hf, lf) = self.datasets()?;
        let points = run_hf_fraction(&self.context(&hf, &lf))?;
        let name = write_sweep(&points, StudyKind::HfFraction, &self.out)?;
        self.record(Stage::Full, &[&name])?;
        Ok(points)
    }

    pub fn alpha(&self) -> Result<Vec<SweepPoint>> {
        let (hf, lf) = self.datasets()?;
        let points = run_alpha(&self.context(&hf, &lf))?;
        let name = write_sweep(&points, StudyKind::Alpha, &self.out)?;
        self.record(Stage::Full, &[&name])?;
        Ok(points)
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Output directory precedence: explicit flag, then `VIBEFUSE_OUT`, then the
/// config's `io.out_dir`, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, config: &PipelineConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("VIBEFUSE_OUT").map(PathBuf::from))
        .or_else(|| config.io.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
