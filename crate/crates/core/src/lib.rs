//! Multi-source multi-view clustering.
//!
//! Each source is a set of instances described by one or more views. Sources
//! are linked by partial instance correspondences. The solver jointly fits a
//! spectral embedding per view, a consensus embedding per source and the
//! unknown part of every cross-source mapping, then clusters the consensus
//! rows with k-means.
//!
//! * [`data`] loads datasets from disk or generates synthetic ones;
//! * [`optimizer::fit`] runs the alternating solver;
//! * [`metrics`] scores labelings and inferred mappings;
//! * [`cli`] backs the `mmc` binary (`fit`, `sweep`, `synth`).

pub mod cli;
pub mod clustering;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod mapping;
pub mod metrics;
pub mod optimizer;
pub mod data;
