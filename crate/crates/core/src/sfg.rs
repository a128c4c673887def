//! Sparse feature graph: one leave-one-out sparse coding problem per
//! feature, stored as a weighted directed graph, plus the reconstruction
//! angle filter that discards failed representations.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, FeatureMatrix};
use crate::omp::{omp, MaskedColumns, OmpConfig};

/// Default reconstruction angle threshold, 15 degrees.
pub const DEFAULT_MAX_ANGLE: f64 = 15.0 * std::f64::consts::PI / 180.0;

/// Weighted directed graph over features. Edge `i → j` carries the
/// coefficient of feature `j` in the sparse representation of feature `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFeatureGraph {
    d: usize,
    out_edges: Vec<Vec<(usize, f64)>>,
    in_degree: Vec<usize>,
    failed: BTreeSet<usize>,
}

/// Which side of the angle threshold counts as a failed representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AngleRule {
    /// Fail when the angle exceeds the threshold.
    #[default]
    FailAbove,
    /// Fail when the angle is below the threshold.
    FailBelow,
}

impl SparseFeatureGraph {
    /// Builds a graph from explicit rows. Self-loops and zero weights are
    /// dropped.
    pub fn from_rows(
        d: usize,
        rows: Vec<Vec<(usize, f64)>>,
        failed: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if rows.len() != d {
            return Err(Error::Dimension(format!(
                "{} rows for {d} nodes",
                rows.len()
            )));
        }
        let mut out_edges = Vec::with_capacity(d);
        for (i, row) in rows.into_iter().enumerate() {
            let mut clean = Vec::with_capacity(row.len());
            for (j, w) in row {
                if j >= d {
                    return Err(Error::IndexOutOfRange { index: j, len: d });
                }
                if !w.is_finite() {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: format!("non-finite weight on edge {i}->{j}"),
                    });
                }
                if j != i && w != 0.0 && !clean.iter().any(|&(k, _)| k == j) {
                    clean.push((j, w));
                }
            }
            out_edges.push(clean);
        }
        let failed: BTreeSet<usize> = failed.into_iter().collect();
        if let Some(&bad) = failed.iter().find(|&&f| f >= d) {
            return Err(Error::IndexOutOfRange { index: bad, len: d });
        }
        let mut g = Self {
            d,
            out_edges,
            in_degree: Vec::new(),
            failed,
        };
        g.in_degree = g.compute_in_degree();
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out_edges[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.out_edges[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    pub fn in_degree(&self) -> &[usize] {
        &self.in_degree
    }

    pub fn failed_nodes(&self) -> &BTreeSet<usize> {
        &self.failed
    }

    /// In-degrees counted from scratch over the edge set.
    pub fn compute_in_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.d];
        for (_, j, _) in self.edges() {
            deg[j] += 1;
        }
        deg
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w.abs()).fold(0.0, f64::max)
    }

    /// Reconstruction of node `node` from its out-edges.
    pub fn reconstruction(&self, features: &FeatureMatrix, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; features.n()];
        for &(j, w) in &self.out_edges[node] {
            for (o, v) in out.iter_mut().zip(features.column(j)) {
                *o += w * v;
            }
        }
        out
    }

    /// Angle in radians between feature `node` and its reconstruction, or
    /// `None` when either vector is zero.
    pub fn representation_angle(&self, features: &FeatureMatrix, node: usize) -> Option<f64> {
        let recon = self.reconstruction(features, node);
        let f = features.column(node);
        let nr = dot(&recon, &recon).sqrt();
        let nf = dot(f, f).sqrt();
        if nr <= 1e-12 || nf == 0.0 {
            return None;
        }
        let cos = (dot(f, &recon) / (nr * nf)).clamp(-1.0, 1.0);
        Some(cos.acos())
    }

    pub fn representation_angles(&self, features: &FeatureMatrix) -> Vec<Option<f64>> {
        (0..self.d)
            .into_par_iter()
            .map(|i| self.representation_angle(features, i))
            .collect()
    }

    /// Removes the out-edges of every node whose representation fails the
    /// angle test (undefined angles always fail). In-edges into failed
    /// nodes are kept.
    pub fn filter_failed(
        &self,
        features: &FeatureMatrix,
        max_angle: f64,
        rule: AngleRule,
    ) -> Result<Self> {
        if !(max_angle > 0.0 && max_angle <= FRAC_PI_2) {
            return Err(Error::Parameter(format!(
                "max angle must lie in (0, π/2], got {max_angle}"
            )));
        }
        if features.d() != self.d {
            return Err(Error::Dimension(format!(
                "graph has {} nodes but matrix has {} features",
                self.d,
                features.d()
            )));
        }
        let angles = self.representation_angles(features);
        let mut out = self.clone();
        for (i, angle) in angles.into_iter().enumerate() {
            let fails = match (angle, rule) {
                (None, _) => true,
                (Some(a), AngleRule::FailAbove) => a > max_angle,
                (Some(a), AngleRule::FailBelow) => a < max_angle,
            };
            if fails {
                out.out_edges[i].clear();
                out.failed.insert(i);
            }
        }
        out.in_degree = out.compute_in_degree();
        Ok(out)
    }

    pub fn angle_histogram(&self, features: &FeatureMatrix, bins: usize) -> Result<AngleReport> {
        AngleReport::new(self.representation_angles(features), bins)
    }

    /// Writes the edge list as `src<TAB>dst<TAB>weight` under a
    /// `# sfg d=<d> failed=<list>` header.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        let failed: Vec<String> = self.failed.iter().map(usize::to_string).collect();
        writeln!(w, "# sfg d={} failed={}", self.d, failed.join(","))?;
        for (i, j, weight) in self.edges() {
            writeln!(w, "{i}\t{j}\t{weight}")?;
        }
        w.flush()
    }

    pub fn read_tsv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io("<sfg>", e))?,
            None => {
                return Err(Error::Parse {
                    row: 1,
                    message: "empty graph file".into(),
                })
            }
        };
        let bad_header = || Error::Parse {
            row: 1,
            message: format!("malformed graph header {header:?}"),
        };
        let rest = header.strip_prefix("# sfg ").ok_or_else(bad_header)?;
        let mut d = None;
        let mut failed = Vec::new();
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("d=") {
                d = Some(v.parse::<usize>().map_err(|_| bad_header())?);
            } else if let Some(v) = field.strip_prefix("failed=") {
                for f in v.split(',').filter(|s| !s.is_empty()) {
                    failed.push(f.parse::<usize>().map_err(|_| bad_header())?);
                }
            }
        }
        let d = d.ok_or_else(bad_header)?;
        let mut rows = vec![Vec::new(); d];
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io("<sfg>", e))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let row_no = idx + 1;
            let parts: Vec<&str> = line.split('\t').collect();
            let parse_err = |m: &str| Error::Parse {
                row: row_no,
                message: m.to_string(),
            };
            if parts.len() != 3 {
                return Err(parse_err("expected src<TAB>dst<TAB>weight"));
            }
            let src: usize = parts[0]
                .parse()
                .map_err(|_| parse_err("bad source index"))?;
            let dst: usize = parts[1]
                .parse()
                .map_err(|_| parse_err("bad target index"))?;
            let weight: f64 = parts[2].parse().map_err(|_| parse_err("bad weight"))?;
            if src >= d {
                return Err(Error::IndexOutOfRange { index: src, len: d });
            }
            rows[src].push((dst, weight));
        }
        Self::from_rows(d, rows, failed)
    }
}

/// Solves the leave-one-out sparse coding problem for every feature.
///
/// `features` must have unit-norm columns, except all-zero columns, which
/// are excluded from every dictionary and marked failed.
pub fn build_sfg(features: &FeatureMatrix, config: &OmpConfig) -> Result<SparseFeatureGraph> {
    config.validate()?;
    let d = features.d();
    let active: Vec<usize> = (0..d)
        .filter(|&j| features.column(j).iter().any(|&v| v != 0.0))
        .collect();
    let mut position = vec![None; d];
    for (p, &j) in active.iter().enumerate() {
        position[j] = Some(p);
    }

    let rows: Vec<Result<Vec<(usize, f64)>>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let Some(pos) = position[i] else {
                return Ok(Vec::new());
            };
            if active.len() < 2 {
                return Ok(Vec::new());
            }
            let dict = MaskedColumns::leave_one_out(features, &active, pos);
            let rep = omp(&dict, features.column(i), config)
                .map_err(|e| e.in_stage(format!("feature {i}")))?;
            Ok(rep
                .support
                .iter()
                .zip(&rep.coefficients)
                .map(|(&s, &c)| (dict.column_index(s), c))
                .collect())
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let zero: Vec<usize> = (0..d).filter(|&i| position[i].is_none()).collect();
    SparseFeatureGraph::from_rows(d, rows, zero)
}

/// Reconstruction angles with a fixed-width histogram over `[0, π/2]`.
/// Undefined angles go to `overflow`; angles above π/2 land in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub angles: Vec<Option<f64>>,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub overflow: usize,
}

impl AngleReport {
    pub fn new(angles: Vec<Option<f64>>, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Parameter("histogram needs at least one bin".into()));
        }
        let width = FRAC_PI_2 / bins as f64;
        let bin_edges = (0..=bins).map(|k| k as f64 * width).collect();
        let mut counts = vec![0; bins];
        let mut overflow = 0;
        for a in &angles {
            match a {
                Some(a) => {
                    let k = ((a / width).floor() as usize).min(bins - 1);
                    counts[k] += 1;
                }
                None => overflow += 1,
            }
        }
        Ok(Self {
            angles,
            bin_edges,
            counts,
            overflow,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn dup_and_orthogonal() -> FeatureMatrix {
        let a = unit(vec![1.0, 2.0, 0.0, 0.0]);
        let c = unit(vec![0.0, 0.0, 1.0, -1.0]);
        FeatureMatrix::from_columns(&[a.clone(), a, c]).unwrap()
    }

    #[test]
    fn duplicate_pair_links_both_ways() {
        let f = dup_and_orthogonal();
        let g = build_sfg(&f, &OmpConfig::default()).unwrap();
        assert!((g.weight(0, 1).abs() - 1.0).abs() < 1e-8);
        assert!((g.weight(1, 0).abs() - 1.0).abs() < 1e-8);
        assert!(g.out_edges(2).is_empty());
        assert_eq!(g.in_degree(), &[1, 1, 0]);
        assert!(g.representation_angle(&f, 0).unwrap() < 1e-6);
        assert!(g.representation_angle(&f, 2).is_none());
    }

    #[test]
    fn orthogonal_pair_has_no_edges_and_is_filtered() {
        let f = FeatureMatrix::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = build_sfg(&f, &OmpConfig::default()).unwrap();
        assert_eq!(g.edge_count(), 0);
        let filtered = g.filter_failed(&f, 0.1, AngleRule::FailAbove).unwrap();
        assert_eq!(filtered.failed_nodes().len(), 2);
    }

    #[test]
    fn zero_columns_are_failed_and_excluded() {
        let a = unit(vec![1.0, 1.0, 0.0]);
        let f = FeatureMatrix::from_columns(&[a.clone(), vec![0.0; 3], a]).unwrap();
        let g = build_sfg(&f, &OmpConfig::default()).unwrap();
        assert!(g.failed_nodes().contains(&1));
        assert!(g.out_edges(1).is_empty());
        assert_eq!(g.in_degree()[1], 0);
        assert!((g.weight(0, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_keeps_in_edges_of_failed_nodes() {
        // node 2 is close to node 0; nodes 0 and 1 are orthogonal
        let f = FeatureMatrix::from_columns(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            unit(vec![1.0, 0.5, 0.0]),
        ])
        .unwrap();
        let g = SparseFeatureGraph::from_rows(
            3,
            vec![vec![(1, 0.5)], vec![(0, 0.3)], vec![(0, 1.0)]],
            [],
        )
        .unwrap();
        // node 2 has angle atan(0.5) ≈ 0.464 and passes; 0 and 1 are at π/2
        let filtered = g.filter_failed(&f, 0.5, AngleRule::FailAbove).unwrap();
        assert_eq!(
            filtered.failed_nodes().iter().copied().collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert!(filtered.out_edges(0).is_empty());
        assert!(filtered.out_edges(1).is_empty());
        assert_eq!(filtered.weight(2, 0), 1.0);
        assert_eq!(filtered.in_degree(), &[1, 0, 0]);

        let inverted = g.filter_failed(&f, 0.5, AngleRule::FailBelow).unwrap();
        assert_eq!(
            inverted.failed_nodes().iter().copied().collect::<Vec<_>>(),
            vec![2]
        );
        assert!(g.filter_failed(&f, 0.0, AngleRule::FailAbove).is_err());
        assert!(g.filter_failed(&f, 2.0, AngleRule::FailAbove).is_err());
    }

    #[test]
    fn histogram_cases() {
        let r = AngleReport::new(vec![Some(0.0); 5], 4).unwrap();
        assert_eq!(r.counts, vec![5, 0, 0, 0]);
        let r = AngleReport::new(vec![None; 3], 4).unwrap();
        assert_eq!(r.counts, vec![0; 4]);
        assert_eq!(r.overflow, 3);
        assert!(AngleReport::new(vec![], 0).is_err());
    }

    #[test]
    fn histogram_matches_direct_binning() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bins = 9;
        let angles: Vec<Option<f64>> = (0..500)
            .map(|_| Some(rng.random_range(0.0..FRAC_PI_2)))
            .collect();
        let r = AngleReport::new(angles.clone(), bins).unwrap();
        let mut oracle = vec![0usize; bins];
        for a in angles.iter().flatten() {
            for k in 0..bins {
                let lo = FRAC_PI_2 * k as f64 / bins as f64;
                let hi = FRAC_PI_2 * (k + 1) as f64 / bins as f64;
                if *a >= lo && (*a < hi || k == bins - 1) {
                    oracle[k] += 1;
                    break;
                }
            }
        }
        assert_eq!(r.counts, oracle);
        assert_eq!(r.counts.iter().sum::<usize>(), 500);
    }

    #[test]
    fn tsv_round_trip() {
        let g = SparseFeatureGraph::from_rows(
            4,
            vec![
                vec![(1, 0.1 + 0.2), (3, -1.0 / 3.0)],
                vec![],
                vec![(0, 1e-17)],
                vec![],
            ],
            [1, 3],
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# sfg d=4 failed=1,3\n"));
        let back = SparseFeatureGraph::read_tsv(&buf[..]).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn tsv_rejects_garbage() {
        assert!(SparseFeatureGraph::read_tsv(&b"nope\n"[..]).is_err());
        assert!(SparseFeatureGraph::read_tsv(&b"# sfg d=2 failed=\n0\t5\t1.0\n"[..]).is_err());
        assert!(SparseFeatureGraph::read_tsv(&b"# sfg d=2 failed=\n0\t1\n"[..]).is_err());
    }
}
