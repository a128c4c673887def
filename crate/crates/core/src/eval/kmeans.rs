//! Lloyd k-means with ++ seeding and restarts, and the NJW clustering step
//! built on top of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::spectral::SpectralEmbedding;
use crate::matrix::LabelVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Relative objective change that ends a run.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tolerance: 1e-6,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: f64,
    /// Objective after every assignment step of the winning run.
    pub history: Vec<f64>,
    /// Index of the restart that produced this result.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (p, l) in points.iter().zip(labels.iter_mut()) {
        let (c, d) = nearest(p, centroids);
        *l = c;
        objective += d;
    }
    objective
}

/// Gives every empty cluster the point of the largest cluster that lies
/// farthest from its centroid. Returns whether anything changed.
fn repair_empty(points: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize]) -> bool {
    let k = centroids.len();
    let mut changed = false;
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return changed;
        };
        let largest = (0..k)
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .unwrap();
        if sizes[largest] < 2 {
            return changed;
        }
        let far = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[largest])
                    .total_cmp(&sq_dist(&points[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        centroids[empty] = points[far].clone();
        labels[far] = empty;
        changed = true;
    }
}

fn update_centroids(points: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
}

fn single_run(points: &[Vec<f64>], k: usize, cfg: &KMeansConfig, restart: usize) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();
    let mut objective = assign(points, &centroids, &mut labels);
    if repair_empty(points, &mut centroids, &mut labels) {
        objective = assign(points, &centroids, &mut labels);
    }
    history.push(objective);
    for _ in 0..cfg.max_iter {
        update_centroids(points, &labels, &mut centroids);
        let previous_labels = labels.clone();
        let mut next = assign(points, &centroids, &mut labels);
        if repair_empty(points, &mut centroids, &mut labels) {
            next = assign(points, &centroids, &mut labels);
        }
        history.push(next);
        let done = labels == previous_labels
            || (objective - next).abs() <= cfg.tolerance * objective.abs().max(f64::MIN_POSITIVE);
        objective = next;
        if done {
            break;
        }
    }
    KMeansResult {
        labels,
        centroids,
        objective,
        history,
        restart,
    }
}

/// Best of `cfg.restarts` seeded runs by final objective, earliest restart
/// on ties.
pub fn kmeans(points: &[Vec<f64>], k: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "k-means needs 1 ≤ K ≤ n, got K={k}, n={n}"
        )));
    }
    if points.iter().any(|p| p.len() != points[0].len()) {
        return Err(Error::Dimension("points differ in dimension".into()));
    }
    let runs: Vec<KMeansResult> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| single_run(points, k, cfg, r))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| {
            if r.objective < best.objective {
                r
            } else {
                best
            }
        })
        .expect("at least one restart"))
}

/// Rows of the first `k` embedding columns, renormalized to unit length
/// (zero rows are left as is), clustered by k-means.
pub fn njw_cluster(
    embedding: &SpectralEmbedding,
    k: usize,
    cfg: &KMeansConfig,
) -> Result<LabelVector> {
    let n = embedding.samples();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cluster count must satisfy 1 ≤ K ≤ n, got K={k}, n={n}"
        )));
    }
    if embedding.dims() < k {
        return Err(Error::Parameter(format!(
            "embedding has {} columns, need {k}",
            embedding.dims()
        )));
    }
    if k == 1 {
        return LabelVector::new(vec![0; n]);
    }
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = embedding.vectors()[..k].iter().map(|v| v[i]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
            row
        })
        .collect();
    LabelVector::new(kmeans(&points, k, cfg)?.labels)
}
