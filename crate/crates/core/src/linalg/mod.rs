//! Sparse storage, bandwidth-reducing ordering, skyline factorization and
//! generalized eigen solvers used by the structural modules.

pub mod eigen;
pub mod ordering;
pub mod skyline;
pub mod sparse;

pub use skyline::{Scalar, SkylineLdl, SkylineProfile};
pub use sparse::{CsrMatrix, SparsePattern};
