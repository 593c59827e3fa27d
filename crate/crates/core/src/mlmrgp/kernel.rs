use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `exp(−Σ_k b_k (x_k − x'_k)²)`.
pub fn squared_exp_kernel(x: &[f64], y: &[f64], b: &[f64]) -> f64 {
    debug_assert!(x.len() == y.len() && y.len() == b.len());
    let s: f64 = x.iter().zip(y).zip(b).map(|((a, c), w)| w * (a - c) * (a - c)).sum();
    (-s).exp()
}

/// How input dimensions share a roughness parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One roughness per input dimension.
    #[default]
    PerDimension,
    /// Dimensions `2s` and `2s + 1` (density and modulus of one segment)
    /// share a roughness.
    SegmentTied,
}

impl Grouping {
    /// Group index of every input dimension.
    pub fn assignment(self, dim: usize) -> Result<Vec<usize>> {
        match self {
            Grouping::PerDimension => Ok((0..dim).collect()),
            Grouping::SegmentTied if dim % 2 == 0 => Ok((0..dim).map(|k| k / 2).collect()),
            Grouping::SegmentTied => Err(Error::Domain(format!(
                "segment-tied grouping needs an even input dimension, got {dim}"
            ))),
        }
    }

    pub fn group_count(self, dim: usize) -> Result<usize> {
        Ok(self.assignment(dim)?.iter().max().map_or(0, |g| g + 1))
    }
}

/// Roughness per group plus the diagonal jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub b: Vec<f64>,
    pub jitter: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.b.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::Domain("roughness entries must be finite and non-negative".into()));
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return Err(Error::Domain(format!("jitter {} must be positive", self.jitter)));
        }
        Ok(())
    }

    /// Roughness expanded to one entry per input dimension.
    pub fn per_dimension(&self, groups: &[usize]) -> Vec<f64> {
        groups.iter().map(|&g| self.b[g]).collect()
    }
}
