//! Orthogonal matching pursuit with a residual-change stopping rule.
//!
//! The solver greedily grows a support set, re-solving least squares on the
//! active atoms after every addition, and stops once the squared residual
//! norm stops changing by more than `epsilon`. Least squares on the support
//! is carried by an incrementally extended Cholesky factor of the support
//! Gram matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, FeatureMatrix};

/// Squared residual (or squared best correlation) below which the target is
/// considered fully explained and no further atom can reduce the objective.
pub const RESIDUAL_FLOOR: f64 = 1e-20;

/// Smallest admissible squared Cholesky pivot when an atom joins the
/// support. Atoms at or below it lie in the span of the current support.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A set of equal-length atoms addressed by position.
pub trait Dictionary: Sync {
    fn signal_len(&self) -> usize;
    fn atom_count(&self) -> usize;
    fn atom(&self, j: usize) -> &[f64];
}

impl Dictionary for FeatureMatrix {
    fn signal_len(&self) -> usize {
        self.n()
    }

    fn atom_count(&self) -> usize {
        self.d()
    }

    fn atom(&self, j: usize) -> &[f64] {
        self.column(j)
    }
}

/// View of selected matrix columns, optionally with one of them held out.
///
/// Atom `j` maps to `columns[j]`, or `columns[j + 1]` once `j` reaches the
/// held-out position, so no column data is copied.
#[derive(Debug, Clone, Copy)]
pub struct MaskedColumns<'a> {
    matrix: &'a FeatureMatrix,
    columns: &'a [usize],
    holdout: Option<usize>,
}

impl<'a> MaskedColumns<'a> {
    pub fn new(matrix: &'a FeatureMatrix, columns: &'a [usize]) -> Self {
        Self {
            matrix,
            columns,
            holdout: None,
        }
    }

    /// Same columns with the one at `position` removed.
    pub fn leave_one_out(matrix: &'a FeatureMatrix, columns: &'a [usize], position: usize) -> Self {
        Self {
            matrix,
            columns,
            holdout: Some(position),
        }
    }

    /// Matrix column behind atom `j`.
    pub fn column_index(&self, j: usize) -> usize {
        match self.holdout {
            Some(h) if j >= h => self.columns[j + 1],
            _ => self.columns[j],
        }
    }
}

impl Dictionary for MaskedColumns<'_> {
    fn signal_len(&self) -> usize {
        self.matrix.n()
    }

    fn atom_count(&self) -> usize {
        self.columns.len() - usize::from(self.holdout.is_some())
    }

    fn atom(&self, j: usize) -> &[f64] {
        self.matrix.column(self.column_index(j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    /// Residual-change threshold.
    pub epsilon: f64,
    /// Support size cap; `usize::MAX` means only the atom count limits it.
    pub max_support: usize,
}

impl Default for OmpConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_support: usize::MAX,
        }
    }
}

impl OmpConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_max_support(mut self, max_support: usize) -> Result<Self> {
        self.max_support = max_support;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_support == 0 {
            return Err(Error::Parameter("max_support must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of [`omp`]. `support` holds atom positions in selection order,
/// `residual_norms[k]` is the squared residual after iteration `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRepresentation {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub final_residual: f64,
}

impl SparseRepresentation {
    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Lower-triangular Cholesky factor of the support Gram matrix, grown one
/// row at a time.
#[derive(Debug, Default)]
struct GramFactor {
    rows: Vec<Vec<f64>>,
}

impl GramFactor {
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Solves `L w = g`.
    fn forward(&self, g: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(g.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&w).map(|(a, b)| a * b).sum();
            w.push((g[i] - s) / row[i]);
        }
        w
    }

    /// Solves `Lᵀ x = y`.
    fn backward(&self, y: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut x = y.to_vec();
        for i in (0..k).rev() {
            let mut s = x[i];
            for (j, row) in self.rows.iter().enumerate().skip(i + 1) {
                s -= row[i] * x[j];
            }
            x[i] = s / self.rows[i][i];
        }
        x
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }
}

fn check_unit(v: &[f64]) -> bool {
    (dot(v, v).sqrt() - 1.0).abs() <= UNIT_NORM_TOLERANCE
}

/// Sparse approximation of `target` over the atoms of `dictionary`.
///
/// Atoms are chosen by largest absolute correlation with the current
/// residual (lowest position wins ties), which for unit-norm atoms is the
/// atom that most reduces the objective. An atom lying in the span of the
/// current support is skipped for the next best one. An iteration that
/// finds no atom able to reduce the residual records an unchanged residual,
/// which triggers the stopping rule.
pub fn omp<D: Dictionary + ?Sized>(
    dictionary: &D,
    target: &[f64],
    config: &OmpConfig,
) -> Result<SparseRepresentation> {
    config.validate()?;
    let n = dictionary.signal_len();
    let p = dictionary.atom_count();
    if p == 0 {
        return Err(Error::Precondition("dictionary has no atoms".into()));
    }
    if target.len() != n {
        return Err(Error::Dimension(format!(
            "target length {} does not match atom length {n}",
            target.len()
        )));
    }
    if !check_unit(target) {
        return Err(Error::Precondition("target vector is not unit-norm".into()));
    }
    if let Some(j) = (0..p).find(|&j| !check_unit(dictionary.atom(j))) {
        return Err(Error::Precondition(format!(
            "dictionary column {j} is not unit-norm"
        )));
    }

    let limit = p.min(config.max_support);
    let mut support: Vec<usize> = Vec::new();
    let mut excluded = vec![false; p];
    let mut factor = GramFactor::default();
    let mut rhs: Vec<f64> = Vec::new();
    let mut coefficients: Vec<f64> = Vec::new();
    let mut residual = target.to_vec();
    let mut r_prev = 1.0;
    let mut trace = Vec::new();
    let mut corr = vec![0.0; p];

    while support.len() < limit {
        for (j, c) in corr.iter_mut().enumerate() {
            *c = if excluded[j] {
                0.0
            } else {
                dot(&residual, dictionary.atom(j))
            };
        }

        let mut accepted = None;
        if r_prev > RESIDUAL_FLOOR {
            loop {
                let mut best: Option<usize> = None;
                for j in 0..p {
                    if excluded[j] {
                        continue;
                    }
                    if best.is_none_or(|b| corr[j].abs() > corr[b].abs()) {
                        best = Some(j);
                    }
                }
                let Some(j) = best else { break };
                if corr[j] * corr[j] <= RESIDUAL_FLOOR {
                    break;
                }
                let atom = dictionary.atom(j);
                let g: Vec<f64> = support
                    .iter()
                    .map(|&s| dot(dictionary.atom(s), atom))
                    .collect();
                let w = factor.forward(&g);
                let pivot = dot(atom, atom) - dot(&w, &w);
                if pivot <= PIVOT_TOLERANCE {
                    // in the span of the current support, and stays there
                    excluded[j] = true;
                    continue;
                }
                accepted = Some((j, w, pivot.sqrt()));
                break;
            }
        }

        let Some((j, mut row, diag)) = accepted else {
            trace.push(r_prev);
            break;
        };

        row.push(diag);
        factor.rows.push(row);
        support.push(j);
        excluded[j] = true;
        rhs.push(dot(dictionary.atom(j), target));

        coefficients = factor.solve(&rhs);
        residual = residual_of(dictionary, target, &support, &coefficients);
        // one step of iterative refinement on the normal equations
        let correction: Vec<f64> = support
            .iter()
            .map(|&s| dot(dictionary.atom(s), &residual))
            .collect();
        let delta = factor.solve(&correction);
        coefficients
            .iter_mut()
            .zip(&delta)
            .for_each(|(c, d)| *c += d);
        residual = residual_of(dictionary, target, &support, &coefficients);

        let r = dot(&residual, &residual);
        trace.push(r);
        if (r - r_prev).abs() <= config.epsilon {
            break;
        }
        r_prev = r;
    }

    let final_residual = trace.last().copied().unwrap_or(r_prev);
    Ok(SparseRepresentation {
        support,
        coefficients,
        residual_norms: trace,
        final_residual,
    })
}

fn residual_of<D: Dictionary + ?Sized>(
    dictionary: &D,
    target: &[f64],
    support: &[usize],
    coefficients: &[f64],
) -> Vec<f64> {
    let mut q = target.to_vec();
    for (&s, &c) in support.iter().zip(coefficients) {
        for (qi, ai) in q.iter_mut().zip(dictionary.atom(s)) {
            *qi -= c * ai;
        }
    }
    q
}

/// Weighted sum of the support atoms.
pub fn reconstruct<D: Dictionary + ?Sized>(
    rep: &SparseRepresentation,
    dictionary: &D,
) -> Result<Vec<f64>> {
    let p = dictionary.atom_count();
    let mut out = vec![0.0; dictionary.signal_len()];
    for (&s, &c) in rep.support.iter().zip(&rep.coefficients) {
        if s >= p {
            return Err(Error::IndexOutOfRange { index: s, len: p });
        }
        for (o, a) in out.iter_mut().zip(dictionary.atom(s)) {
            *o += c * a;
        }
    }
    Ok(out)
}
