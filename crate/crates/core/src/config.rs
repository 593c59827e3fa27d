//! The pipeline configuration file: one JSON document with a section per
//! module, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::sha256_hex;
use crate::dataset::SplitConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fem::ModelConfig;
use crate::guyan::ReductionConfig;
use crate::mfdf::MfdfConfig;
use crate::mlmrgp::MlmrgpConfig;
use crate::sampling::SamplingConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Artifact directory; the CLI's `--out` and `VIBEFUSE_OUT` take precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub mfdf_cnn: MfdfConfig,
    #[serde(default)]
    pub mlmrgp: MlmrgpConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub io: IoConfig,
}

/// Per-stage seeds after falling back to the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub sampling: u64,
    pub split: u64,
    pub mfdf: u64,
    pub gp: u64,
    pub eval: u64,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Cross-section checks; the model itself is validated when built.
    pub fn validate(&self) -> Result<()> {
        self.sampling.spec(self.seed).validate().map_err(|e| e.in_module("sampling"))?;
        let (n, l, h) = (self.sampling.count, self.split.lf_train, self.split.hf_train);
        if l > n || h > l {
            return Err(Error::Domain(format!(
                "split needs hf_train ({h}) <= lf_train ({l}) <= sample count ({n})"
            ))
            .in_module("split"));
        }
        self.mfdf_cnn.validate().map_err(|e| e.in_module("mfdf_cnn"))?;
        self.mlmrgp.validate().map_err(|e| e.in_module("mlmrgp"))?;
        self.eval.validate().map_err(|e| e.in_module("eval"))
    }

    /// SHA-256 of the canonical serialization, paths excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.io = IoConfig::default();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn seeds(&self) -> Seeds {
        let or = |s: Option<u64>| s.unwrap_or(self.seed);
        Seeds {
            sampling: or(self.sampling.seed),
            split: or(self.split.seed),
            mfdf: or(self.mfdf_cnn.seed),
            gp: or(self.mlmrgp.seed),
            eval: or(self.eval.seed),
        }
    }
}
