//! Synthetic datasets with planted clusters and planted redundancy.
//!
//! Columns are laid out as `[base | duplicates | mixtures | noise]`. Base
//! features carry the cluster structure (centroid plus unit Gaussian noise),
//! duplicates copy a base column exactly, mixtures are convex combinations
//! of 2 to 4 base columns plus small noise, and noise features are pure
//! standard Gaussian.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, FeatureMatrix, LabelVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub clusters: usize,
    /// Minimum distance between cluster centroids in units of the
    /// within-cluster standard deviation.
    pub separation: f64,
    pub base_features: usize,
    pub duplicate_pairs: usize,
    pub mixture_features: usize,
    /// Mixture noise norm relative to the mixture's signal norm.
    pub mixture_noise: f64,
    pub noise_features: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 200,
            clusters: 3,
            separation: 6.0,
            base_features: 20,
            duplicate_pairs: 0,
            mixture_features: 0,
            mixture_noise: 1e-3,
            noise_features: 0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn total_features(&self) -> usize {
        self.base_features + self.duplicate_pairs + self.mixture_features + self.noise_features
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duplicate {
    pub column: usize,
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub column: usize,
    pub sources: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Which column plays which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub base: Vec<usize>,
    pub duplicates: Vec<Duplicate>,
    pub mixtures: Vec<Mixture>,
    pub noise: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub matrix: FeatureMatrix,
    pub labels: LabelVector,
    pub truth: GroundTruth,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    let d = spec.total_features();
    if d == 0 {
        return Err(Error::Parameter("synthetic dataset has no features".into()));
    }
    if spec.n < 2 {
        return Err(Error::Parameter(
            "synthetic dataset needs at least 2 samples".into(),
        ));
    }
    if spec.clusters == 0 || spec.clusters > spec.n {
        return Err(Error::Parameter(format!(
            "cluster count {} invalid for {} samples",
            spec.clusters, spec.n
        )));
    }
    if spec.duplicate_pairs > 0 && spec.base_features == 0 {
        return Err(Error::Parameter(
            "duplicates need at least one base feature".into(),
        ));
    }
    if spec.mixture_features > 0 && spec.base_features < 2 {
        return Err(Error::Parameter(
            "mixtures need at least two base features".into(),
        ));
    }
    if !(spec.separation >= 0.0 && spec.mixture_noise >= 0.0) {
        return Err(Error::Parameter(
            "separation and mixture noise must be non-negative".into(),
        ));
    }

    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = (0..n).map(|i| i % spec.clusters).collect();
    let centroids = place_centroids(spec, &mut rng);

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut names = Vec::with_capacity(d);
    for f in 0..spec.base_features {
        let col = labels
            .iter()
            .map(|&c| centroids[c][f] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        columns.push(col);
        names.push(format!("base_{f}"));
    }

    let mut duplicates = Vec::with_capacity(spec.duplicate_pairs);
    for k in 0..spec.duplicate_pairs {
        let source = k % spec.base_features;
        duplicates.push(Duplicate {
            column: columns.len(),
            source,
        });
        columns.push(columns[source].clone());
        names.push(format!("dup_{k}_of_{source}"));
    }

    let mut mixtures = Vec::with_capacity(spec.mixture_features);
    for k in 0..spec.mixture_features {
        let max_terms = spec.base_features.min(4);
        let terms = rng.random_range(2..=max_terms);
        let mut sources = sample(&mut rng, spec.base_features, terms).into_vec();
        sources.sort_unstable();
        let raw: Vec<f64> = (0..terms).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut col = vec![0.0; n];
        for (&s, &w) in sources.iter().zip(&weights) {
            col.iter_mut()
                .zip(&columns[s])
                .for_each(|(c, v)| *c += w * v);
        }
        let std = spec.mixture_noise * dot(&col, &col).sqrt() / (n as f64).sqrt();
        if std > 0.0 {
            let noise = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
            col.iter_mut().for_each(|c| *c += noise.sample(&mut rng));
        }
        mixtures.push(Mixture {
            column: columns.len(),
            sources,
            weights,
        });
        columns.push(col);
        names.push(format!("mix_{k}"));
    }

    let mut noise = Vec::with_capacity(spec.noise_features);
    for k in 0..spec.noise_features {
        noise.push(columns.len());
        columns.push((0..n).map(|_| rng.sample(StandardNormal)).collect());
        names.push(format!("noise_{k}"));
    }

    let matrix = FeatureMatrix::from_columns(&columns)?.with_feature_names(names)?;
    Ok(SynthData {
        matrix,
        labels: LabelVector::new(labels)?,
        truth: GroundTruth {
            base: (0..spec.base_features).collect(),
            duplicates,
            mixtures,
            noise,
        },
    })
}

/// Gaussian centroids rescaled so the closest pair sits `separation` apart.
fn place_centroids(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = spec.base_features;
    let mut centroids: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..spec.clusters {
        for b in (a + 1)..spec.clusters {
            let d2: f64 = centroids[a]
                .iter()
                .zip(&centroids[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            min_dist = min_dist.min(d2.sqrt());
        }
    }
    if min_dist.is_finite() && min_dist > 0.0 {
        let scale = spec.separation / min_dist;
        for c in &mut centroids {
            c.iter_mut().for_each(|v| *v *= scale);
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_copy_base_columns() {
        let spec = SynthSpec {
            n: 10,
            base_features: 2,
            duplicate_pairs: 2,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        assert_eq!(data.matrix.d(), 4);
        assert_eq!(data.matrix.column(2), data.matrix.column(0));
        assert_eq!(data.matrix.column(3), data.matrix.column(1));
    }

    #[test]
    fn seed_determines_output() {
        let spec = SynthSpec {
            mixture_features: 3,
            noise_features: 2,
            duplicate_pairs: 1,
            ..SynthSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn ground_truth_roles_are_disjoint() {
        let spec = SynthSpec {
            base_features: 5,
            duplicate_pairs: 7,
            mixture_features: 4,
            noise_features: 3,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        let t = &data.truth;
        let mut all: Vec<usize> = t.base.clone();
        all.extend(t.duplicates.iter().map(|x| x.column));
        all.extend(t.mixtures.iter().map(|x| x.column));
        all.extend(&t.noise);
        all.sort();
        assert_eq!(all, (0..spec.total_features()).collect::<Vec<_>>());
        for m in &t.mixtures {
            assert!((2..=4).contains(&m.sources.len()));
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(m.weights.iter().all(|&w| w > 0.0));
            assert!(m.sources.iter().all(|&s| s < 5));
        }
        assert!(t.duplicates.iter().all(|x| x.source < 5));
    }

    #[test]
    fn rejects_empty_spec() {
        let spec = SynthSpec {
            base_features: 0,
            ..SynthSpec::default()
        };
        assert!(generate(&spec).is_err());
    }
}
