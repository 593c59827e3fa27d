use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response magnitudes (m) flattened output-DOF-major within each frequency:
/// `[U(dof 1, f 1), …, U(dof n, f 1), U(dof 1, f 2), …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector(pub Vec<f64>);

impl ResponseVector {
    pub fn from_grid(outputs: usize, freqs: usize, at: impl Fn(usize, usize) -> f64) -> Self {
        let mut v = Vec::with_capacity(outputs * freqs);
        for r in 0..freqs {
            for j in 0..outputs {
                v.push(at(j, r));
            }
        }
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, outputs: usize, dof: usize, freq: usize) -> f64 {
        self.0[freq * outputs + dof]
    }

    pub fn validate(&self, outputs: usize, freqs: usize) -> Result<()> {
        if self.0.len() != outputs * freqs {
            return Err(Error::Shape(format!(
                "response of length {} for {outputs} outputs × {freqs} frequencies",
                self.0.len()
            )));
        }
        if let Some(v) = self.0.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("non-positive response magnitude {v}")));
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_dof_major_within_frequency() {
        let r = ResponseVector::from_grid(2, 3, |j, f| (10 * f + j) as f64 + 1.0);
        assert_eq!(r.0, vec![1.0, 2.0, 11.0, 12.0, 21.0, 22.0]);
        assert_eq!(r.get(2, 1, 2), 22.0);
        assert!(r.validate(2, 3).is_ok());
        assert!(r.validate(3, 3).is_err());
        assert!(ResponseVector(vec![0.0]).validate(1, 1).is_err());
    }
}
