use thiserror::Error;

/// Errors raised anywhere in the simulation and emulation pipeline.
///
/// Variants carry enough context (module, index, frequency point) for the CLI
/// to print a one-line diagnostic without a backtrace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("element {element} has a non-positive Jacobian determinant ({det:e}) at a quadrature point")]
    ElementQuality { element: usize, det: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("factorization failed at pivot {pivot}: {reason}")]
    Factorization { pivot: usize, reason: String },

    #[error("solver error at frequency index {freq_index}: {source}")]
    FrequencySolve {
        freq_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("gaussian process: {0}")]
    Gp(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{path}` (line {line}, column {column}): {message}")]
    Config {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn at_frequency(self, freq_index: usize) -> Self {
        Error::FrequencySolve {
            freq_index,
            source: Box::new(self),
        }
    }

    pub fn at_sample(self, sample: usize) -> Self {
        Error::Sample {
            sample,
            source: Box::new(self),
        }
    }

    pub fn in_module(self, module: &'static str) -> Self {
        Error::Module {
            module,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
