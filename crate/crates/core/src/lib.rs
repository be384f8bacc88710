//! Learning graph-signal pseudo-translations.
//!
//! A classifier built from graph-shift layers learns `K` edge-constrained
//! operators relaxed by a temperature-annealed masked softmax. After training
//! the operators are hardened to one target per vertex and compared against
//! canonical grid translations.

pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod transform;
pub mod viz;

pub use error::{Error, Result};
pub use graph::{build_grid_graph, build_knn_covariance_graph, build_ring_graph, laplacian, DenseMatrix, Graph};
pub use transform::{
    apply_hard, convolve, harden, mode3_product, soften, temperature_at, EdgeLogits, HardTransforms, Schedule,
    SoftTransforms,
};
