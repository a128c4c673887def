//! Gaussian similarity graphs and normalized-Laplacian spectral embeddings.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, FeatureMatrix, SquareMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: SquareMatrix,
    sigma: f64,
}

impl SimilarityGraph {
    /// Wraps an explicit symmetric weight matrix with nonnegative entries.
    pub fn new(weights: SquareMatrix, sigma: f64) -> Result<Self> {
        let n = weights.size();
        for i in 0..n {
            for j in 0..n {
                let w = weights.get(i, j);
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "invalid weight {w} at ({i}, {j})"
                    )));
                }
                if (w - weights.get(j, i)).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "weights not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { weights, sigma })
    }

    pub fn weights(&self) -> &SquareMatrix {
        &self.weights
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn size(&self) -> usize {
        self.weights.size()
    }
}

/// `W[i][j] = exp(−‖x_i − x_j‖² / (2σ²))` over sample rows. Without an
/// explicit `sigma`, σ is the mean pairwise distance between distinct
/// samples.
pub fn gaussian_similarity(data: &FeatureMatrix, sigma: Option<f64>) -> Result<SimilarityGraph> {
    let n = data.n();
    if n < 2 {
        return Err(Error::Dimension(
            "similarity graph needs at least 2 samples".into(),
        ));
    }
    let dist = data.pairwise_euclidean();
    let sigma = match sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::Parameter(format!("sigma must be positive, got {s}"))),
        None => {
            let mut sum = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    sum += dist.get(i, j);
                }
            }
            let mean = sum / (n * (n - 1) / 2) as f64;
            if mean <= 0.0 {
                return Err(Error::Degenerate("all samples are identical".into()));
            }
            mean
        }
    };
    let denom = 2.0 * sigma * sigma;
    let weights = SquareMatrix::from_fn(n, |i, j| {
        let d = dist.get(i, j);
        (-(d * d) / denom).exp()
    });
    Ok(SimilarityGraph { weights, sigma })
}

/// Eigenvectors of the symmetric normalized Laplacian for the `K` smallest
/// eigenvalues, one column each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    vectors: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn new(vectors: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> Result<Self> {
        if vectors.is_empty() || vectors.len() != eigenvalues.len() {
            return Err(Error::Dimension(format!(
                "{} vectors with {} eigenvalues",
                vectors.len(),
                eigenvalues.len()
            )));
        }
        let n = vectors[0].len();
        if vectors.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension(
                "embedding columns differ in length".into(),
            ));
        }
        Ok(Self {
            vectors,
            eigenvalues,
        })
    }

    pub fn dims(&self) -> usize {
        self.vectors.len()
    }

    pub fn samples(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.vectors.iter().map(|v| v[i]).collect()
    }

    /// Same embedding with column `k` negated.
    pub fn flip_sign(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.vectors[k].iter_mut().for_each(|v| *v = -*v);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Largest graph handled by a dense decomposition; bigger graphs use
    /// Lanczos iteration.
    pub dense_limit: usize,
    pub tolerance: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            dense_limit: 4000,
            tolerance: 1e-8,
        }
    }
}

/// `D^{-1/2} W D^{-1/2}` as a dense row-major buffer.
pub fn normalized_affinity(graph: &SimilarityGraph) -> Result<Vec<f64>> {
    let n = graph.size();
    let w = graph.weights();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = w.row(i).iter().sum();
            if deg > 0.0 {
                Ok(1.0 / deg.sqrt())
            } else {
                Err(Error::Degenerate(format!("vertex {i} is isolated")))
            }
        })
        .collect::<Result<_>>()?;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = inv_sqrt[i] * w.get(i, j) * inv_sqrt[j];
        }
    }
    Ok(m)
}

pub fn spectral_embedding(graph: &SimilarityGraph, k: usize) -> Result<SpectralEmbedding> {
    spectral_embedding_with(graph, k, &EigenOptions::default())
}

pub fn spectral_embedding_with(
    graph: &SimilarityGraph,
    k: usize,
    options: &EigenOptions,
) -> Result<SpectralEmbedding> {
    let n = graph.size();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "embedding dimension must satisfy 1 ≤ K < n, got K={k}, n={n}"
        )));
    }
    let m = normalized_affinity(graph)?;
    let (values, mut vectors) = if n <= options.dense_limit {
        dense_top_eigen(&m, n, k)?
    } else {
        lanczos_top_eigen(&m, n, k, options.tolerance)?
    };
    for v in &mut vectors {
        fix_sign(v);
    }
    // affinity eigenvalue μ ↔ Laplacian eigenvalue 1 − μ
    let eigenvalues = values.iter().map(|mu| 1.0 - mu).collect();
    SpectralEmbedding::new(vectors, eigenvalues)
}

/// Makes the first entry of non-negligible magnitude positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Largest `k` eigenpairs of a dense symmetric matrix, descending.
fn dense_top_eigen(m: &[f64], n: usize, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mat = DMatrix::from_row_slice(n, n, m);
    let max_iter = 100 * n.max(10);
    let eig = SymmetricEigen::try_new(mat, f64::EPSILON, max_iter).ok_or(Error::NoConvergence {
        iterations: max_iter,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok((values, vectors))
}

fn matvec(m: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], x)).collect()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes keep the basis orthogonal to working precision
    for _ in 0..2 {
        for v in basis {
            let c = dot(w, v);
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
        }
    }
}

/// Largest `k` eigenpairs by Lanczos with full reorthogonalization. The
/// Krylov dimension doubles until every wanted Ritz pair has residual at
/// most `tol`.
pub(crate) fn lanczos_top_eigen(
    m: &[f64],
    n: usize,
    k: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut steps = (2 * k + 20).max(40).min(n);
    let mut total_iterations = 0;
    loop {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let mut alpha = Vec::with_capacity(steps);
        let mut beta: Vec<f64> = Vec::with_capacity(steps);
        let mut v = random_unit(&mut rng, n, &basis);
        let mut last_beta = 0.0;
        for j in 0..steps {
            basis.push(v);
            let vj = &basis[j];
            let mut w = matvec(m, n, vj);
            let a = dot(&w, vj);
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            let b = dot(&w, &w).sqrt();
            total_iterations += 1;
            if j + 1 == steps {
                last_beta = b;
                break;
            }
            if b <= 1e-10 {
                // invariant subspace found; continue from a fresh direction
                beta.push(0.0);
                v = random_unit(&mut rng, n, &basis);
            } else {
                beta.push(b);
                v = w.iter().map(|x| x / b).collect();
            }
        }
        let size = alpha.len();
        let t = DMatrix::from_fn(size, size, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::try_new(t, f64::EPSILON, 100 * size.max(10)).ok_or(
            Error::NoConvergence {
                iterations: total_iterations,
            },
        )?;
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let wanted = &order[..k];
        let converged = wanted
            .iter()
            .all(|&i| (last_beta * eig.eigenvectors[(size - 1, i)]).abs() <= tol);
        if converged || size == n {
            if !converged {
                return Err(Error::NoConvergence {
                    iterations: total_iterations,
                });
            }
            let values = wanted.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vectors = wanted
                .iter()
                .map(|&i| {
                    let s = eig.eigenvectors.column(i);
                    let mut y = vec![0.0; n];
                    for (c, b) in s.iter().zip(&basis) {
                        y.iter_mut().zip(b).for_each(|(yy, bb)| *yy += c * bb);
                    }
                    let norm = dot(&y, &y).sqrt();
                    y.iter_mut().for_each(|x| *x /= norm);
                    y
                })
                .collect();
            return Ok((values, vectors));
        }
        steps = (steps * 2).min(n);
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, basis);
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
