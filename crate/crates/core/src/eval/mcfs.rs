//! Multi-cluster feature selection: sparse regression of each embedding
//! vector on the features, scoring each feature by its largest absolute
//! coefficient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::spectral::SpectralEmbedding;
use crate::matrix::{dot, FeatureMatrix};
use crate::omp::{omp, MaskedColumns, OmpConfig};

/// Residual-change threshold for the regression path; small enough that the
/// support cap is what ends it.
const MCFS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McfsResult {
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
    /// Sparse `(feature, coefficient)` lists, one per embedding vector.
    pub coefficients: Vec<Vec<(usize, f64)>>,
}

pub fn mcfs_select(
    features: &FeatureMatrix,
    embedding: &SpectralEmbedding,
    m: usize,
    support_cap: usize,
) -> Result<McfsResult> {
    let d = features.d();
    if m == 0 || m > d {
        return Err(Error::Parameter(format!(
            "cannot select {m} of {d} features"
        )));
    }
    if support_cap == 0 {
        return Err(Error::Parameter("support cap must be at least 1".into()));
    }
    if embedding.samples() != features.n() {
        return Err(Error::Dimension(format!(
            "embedding has {} samples, matrix has {}",
            embedding.samples(),
            features.n()
        )));
    }
    let normalized = features.normalize_features().matrix;
    let active: Vec<usize> = (0..d)
        .filter(|&j| normalized.column(j).iter().any(|&v| v != 0.0))
        .collect();
    let config = OmpConfig::new(MCFS_EPSILON)?.with_max_support(support_cap)?;

    let coefficients = embedding
        .vectors()
        .par_iter()
        .map(|y| -> Result<Vec<(usize, f64)>> {
            if active.is_empty() {
                return Ok(Vec::new());
            }
            let norm = dot(y, y).sqrt();
            if norm == 0.0 {
                return Ok(Vec::new());
            }
            let target: Vec<f64> = y.iter().map(|v| v / norm).collect();
            let dict = MaskedColumns::new(&normalized, &active);
            let rep = omp(&dict, &target, &config)?;
            Ok(rep
                .support
                .iter()
                .zip(&rep.coefficients)
                .map(|(&s, &c)| (dict.column_index(s), c))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scores = vec![0.0f64; d];
    for (j, c) in coefficients.iter().flatten() {
        scores[*j] = scores[*j].max(c.abs());
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    Ok(McfsResult {
        scores,
        selected: order,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        FeatureMatrix::from_columns(&cols).unwrap()
    }

    #[test]
    fn exact_feature_target_scores_highest() {
        let x = random_matrix(30, 12, 1);
        let col7 = x.normalize_features().matrix.column(7).to_vec();
        let e = SpectralEmbedding::new(vec![col7], vec![0.0]).unwrap();
        let r = mcfs_select(&x, &e, 1, 3).unwrap();
        assert_eq!(r.selected, vec![7]);
        let best = r.scores.iter().cloned().fold(0.0, f64::max);
        assert_eq!(r.scores[7], best);
    }

    #[test]
    fn selecting_everything_is_a_permutation() {
        let x = random_matrix(20, 6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = SpectralEmbedding::new(vec![y], vec![0.1]).unwrap();
        let mut sel = mcfs_select(&x, &e, 6, 6).unwrap().selected;
        sel.sort();
        assert_eq!(sel, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn sign_flips_do_not_change_selection() {
        let x = random_matrix(25, 10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ys: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..25).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let e = SpectralEmbedding::new(ys, vec![0.0, 0.1, 0.2]).unwrap();
        let base = mcfs_select(&x, &e, 4, 4).unwrap();
        for k in 0..3 {
            let flipped = mcfs_select(&x, &e.flip_sign(k), 4, 4).unwrap();
            assert_eq!(flipped.selected, base.selected);
            assert_eq!(flipped.scores, base.scores);
        }
    }

    #[test]
    fn too_many_features_is_an_error() {
        let x = random_matrix(10, 3, 4);
        let e = SpectralEmbedding::new(vec![vec![1.0; 10]], vec![0.0]).unwrap();
        assert!(matches!(
            mcfs_select(&x, &e, 4, 2),
            Err(Error::Parameter(_))
        ));
    }
}
