//! Evaluation harness: spectral clustering (NJW), NMI/ACC, and MCFS.

pub mod kmeans;
pub mod mcfs;
pub mod metrics;
pub mod spectral;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, njw_cluster, KMeansConfig, KMeansResult};
pub use mcfs::{mcfs_select, McfsResult};
pub use metrics::{acc, nmi};
pub use spectral::{
    gaussian_similarity, spectral_embedding, spectral_embedding_with, EigenOptions,
    SimilarityGraph, SpectralEmbedding,
};

use crate::error::Result;
use crate::matrix::{FeatureMatrix, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub nmi: f64,
    pub acc: f64,
}

impl ClusterScores {
    pub fn compare(predicted: &LabelVector, truth: &LabelVector) -> Result<Self> {
        Ok(Self {
            nmi: nmi(predicted, truth)?,
            acc: acc(predicted, truth)?,
        })
    }
}

/// Gaussian similarity (σ = mean pairwise distance unless given), `k`-dim
/// normalized-Laplacian embedding, then NJW k-means.
pub fn spectral_clustering(
    data: &FeatureMatrix,
    k: usize,
    sigma: Option<f64>,
    cfg: &KMeansConfig,
) -> Result<LabelVector> {
    let graph = gaussian_similarity(data, sigma)?;
    let embedding = spectral_embedding(&graph, k)?;
    njw_cluster(&embedding, k, cfg)
}
