//! External clustering metrics: normalized mutual information and
//! best-mapping accuracy.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::matrix::LabelVector;

/// Contingency table between two labelings, rows indexed by the distinct
/// labels of `a` (ascending), columns by those of `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

impl Contingency {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "label vectors differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let index = |v: &[usize]| -> BTreeMap<usize, usize> {
            let distinct: BTreeSet<usize> = v.iter().copied().collect();
            distinct
                .into_iter()
                .enumerate()
                .map(|(i, k)| (k, i))
                .collect()
        };
        let ia = index(a);
        let ib = index(b);
        let mut counts = vec![vec![0u64; ib.len()]; ia.len()];
        for (x, y) in a.iter().zip(b) {
            counts[ia[x]][ib[y]] += 1;
        }
        Ok(Self {
            counts,
            total: a.len() as u64,
        })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Entropy (natural log) of the empirical distribution given by `counts`.
fn entropy(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let s: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let c = c as f64;
            c * c.ln()
        })
        .sum();
    (n.ln() - s / n).max(0.0)
}

/// `(H(A) + H(B) − H(A,B)) / max(H(A), H(B))`. When both labelings are
/// constant the ratio is 0/0; identical partitions then score 1.
pub fn nmi(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    nmi_slices(a.as_slice(), b.as_slice())
}

pub fn nmi_slices(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let ha = entropy(t.row_sums().into_iter(), t.total);
    let hb = entropy(t.col_sums().into_iter(), t.total);
    let hab = entropy(t.counts.iter().flatten().copied(), t.total);
    let denom = ha.max(hb);
    if denom <= 0.0 {
        // both constant, hence the same single-block partition
        return Ok(1.0);
    }
    Ok(((ha + hb - hab) / denom).clamp(0.0, 1.0))
}

/// Fraction of samples matched under the best one-to-one label mapping.
pub fn acc(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    acc_slices(a.as_slice(), b.as_slice())
}

pub fn acc_slices(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    if t.total == 0 {
        return Ok(0.0);
    }
    let size = t.counts.len().max(t.col_sums().len());
    let mut cost = vec![vec![0i64; size]; size];
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i][j] = -(c as i64);
        }
    }
    let assignment = hungarian(&cost);
    let matched: i64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| -cost[i][j])
        .sum();
    Ok(matched as f64 / t.total as f64)
}

/// Minimum-cost perfect assignment on a square matrix. Returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[usize]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn nmi_identical_is_one() {
        let a = lv(&[0, 0, 1, 1, 2, 2, 2]);
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_constant_vs_binary_is_zero() {
        assert_eq!(nmi(&lv(&[0, 0, 0, 0]), &lv(&[0, 0, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn nmi_both_constant_is_one() {
        assert_eq!(nmi(&lv(&[3, 3, 3]), &lv(&[1, 1, 1])).unwrap(), 1.0);
    }

    #[test]
    fn nmi_hand_entropy_table() {
        // A = [0,0,1,1], B = [0,1,1,1]
        let ln = f64::ln;
        let ha = ln(2.0);
        let hb = -(0.25 * ln(0.25) + 0.75 * ln(0.75));
        // joint cells (0,0)=1, (0,1)=1, (1,1)=2
        let hab = -(0.25 * ln(0.25) * 2.0 + 0.5 * ln(0.5));
        let expected = (ha + hb - hab) / ha.max(hb);
        let got = nmi(&lv(&[0, 0, 1, 1]), &lv(&[0, 1, 1, 1])).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn acc_cases() {
        let b = lv(&[0, 0, 1, 1, 2, 2]);
        let a = lv(&[2, 2, 0, 0, 1, 1]);
        assert_eq!(acc(&a, &b).unwrap(), 1.0);
        assert_eq!(acc(&lv(&[0, 0, 0, 0]), &lv(&[0, 0, 1, 1])).unwrap(), 0.5);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(nmi(&lv(&[0, 1]), &lv(&[0])).is_err());
        assert!(acc(&lv(&[0, 1]), &lv(&[0])).is_err());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = hungarian(&cost);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5);
    }
}
