//! Two-fidelity frequency-response simulation of an uncertain solid-element
//! structure and the emulators that fuse the two fidelity levels.
//!
//! * [`fem`] and [`guyan`] produce high- and low-fidelity responses.
//! * [`sampling`] and [`dataset`] draw parameter samples and manage datasets.
//! * [`nn`] and [`mfdf`] implement the composite fusion network.
//! * [`mlmrgp`] is the two-level co-kriging baseline.
//! * [`eval`] computes error metrics and runs the comparison studies.
//! * [`config`] and [`pipeline`] drive the stages from one configuration file.

pub mod artifact;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fem;
pub mod guyan;
pub mod linalg;
pub mod mfdf;
pub mod mlmrgp;
pub mod nn;
pub mod pipeline;
pub mod response;
pub mod sampling;

pub use error::{Error, Result};
pub use response::ResponseVector;
