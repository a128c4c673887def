//! Redundant feature removal with sparse feature graphs.
//!
//! Each feature is sparsely coded over all the others with orthogonal
//! matching pursuit. The nonzero coefficients form a directed weighted graph
//! over features. Nodes whose reconstruction angle is too large are
//! disconnected, strongly connected groups are found by thresholded
//! breadth-first search, and one representative per group is kept.
//!
//! The [`eval`] module scores the result with spectral clustering
//! (NMI/ACC) and multi-cluster feature selection; [`pipeline`] runs the
//! whole protocol over a threshold sweep.

pub mod config;
pub mod error;
pub mod eval;
pub mod lcs;
pub mod matrix;
pub mod omp;
pub mod pipeline;
pub mod sfg;
pub mod synth;

pub use error::{Error, Result};
pub use lcs::{find_lcs, reduce_matrix, select_representatives, LcsPartition, ReducedFeatureSet};
pub use matrix::{FeatureMatrix, LabelVector};
pub use omp::{omp, OmpConfig, SparseRepresentation};
pub use pipeline::{report_render, run_pipeline, EvalReport, PipelineConfig};
pub use sfg::{build_sfg, AngleRule, SparseFeatureGraph};
