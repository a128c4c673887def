//! End-to-end protocol: build and filter the feature graph, sweep the LCS
//! threshold, and score spectral clustering (and optionally MCFS) on every
//! reduced matrix against the all-feature baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    gaussian_similarity, mcfs_select, spectral_clustering, spectral_embedding, ClusterScores,
    KMeansConfig,
};
use crate::lcs::{find_lcs, reduce_matrix, select_representatives};
use crate::matrix::{FeatureMatrix, LabelVector};
use crate::omp::OmpConfig;
use crate::sfg::{build_sfg, AngleRule, DEFAULT_MAX_ANGLE};

pub fn default_thetas() -> Vec<f64> {
    (1..=9).rev().map(|k| f64::from(k) / 10.0).collect()
}

pub fn default_mcfs_counts() -> Vec<usize> {
    (10..=60).step_by(5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub epsilon: f64,
    /// Radians.
    pub max_angle: f64,
    pub angle_rule: AngleRule,
    pub theta_list: Vec<f64>,
    /// Cluster count; defaults to the number of distinct labels.
    pub k_clusters: Option<usize>,
    /// Selected-feature counts for the MCFS grid.
    pub mcfs_counts: Vec<usize>,
    pub run_mcfs: bool,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub kmeans_tolerance: f64,
    pub drop_singletons: bool,
    pub histogram_bins: usize,
    pub require_labels: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let km = KMeansConfig::default();
        Self {
            epsilon: OmpConfig::default().epsilon,
            max_angle: DEFAULT_MAX_ANGLE,
            angle_rule: AngleRule::FailAbove,
            theta_list: default_thetas(),
            k_clusters: None,
            mcfs_counts: default_mcfs_counts(),
            run_mcfs: false,
            sigma: None,
            seed: km.seed,
            restarts: km.restarts,
            max_iter: km.max_iter,
            kmeans_tolerance: km.tolerance,
            drop_singletons: false,
            histogram_bins: 18,
            require_labels: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        OmpConfig::new(self.epsilon)?;
        if self.theta_list.is_empty() {
            return Err(Error::Config("theta list is empty".into()));
        }
        if let Some(t) = self.theta_list.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Config(format!("theta {t} outside (0, 1]")));
        }
        if !(self.max_angle > 0.0 && self.max_angle <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!(
                "max angle {} rad outside (0, π/2]",
                self.max_angle
            )));
        }
        if self.k_clusters == Some(0) {
            return Err(Error::Config("cluster count must be positive".into()));
        }
        if self.mcfs_counts.is_empty() {
            return Err(Error::Config("MCFS feature-count list is empty".into()));
        }
        if self.mcfs_counts.contains(&0) {
            return Err(Error::Config("MCFS feature counts must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        Ok(())
    }

    fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.max_iter,
            tolerance: self.kmeans_tolerance,
            restarts: self.restarts,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// `None` for the all-feature baseline.
    pub theta: Option<f64>,
    pub retained: usize,
    pub subgraphs: usize,
    pub nmi: Option<f64>,
    pub acc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McfsGrid {
    /// Feature count of each MCFS input: the baseline first, then one per θ.
    pub input_counts: Vec<usize>,
    pub selected_counts: Vec<usize>,
    /// `cells[row][col]` for `selected_counts[row]` × `input_counts[col]`;
    /// `None` where the selection is larger than the input or failed.
    pub cells: Vec<Vec<Option<ClusterScores>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub overflow: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub edges_built: usize,
    pub edges_kept: usize,
    pub failed_nodes: usize,
    pub zero_columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub samples: usize,
    pub features: usize,
    pub clusters: Option<usize>,
    pub graph: GraphSummary,
    pub baseline: SweepRecord,
    pub sweep: Vec<SweepRecord>,
    pub mcfs_grid: Option<McfsGrid>,
    pub angle_histogram: AngleHistogram,
    /// Wall-clock milliseconds per stage; not reproducible across runs.
    pub timings_ms: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with timings cleared, for run-to-run comparison.
    pub fn to_json_without_timings(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timings_ms.clear();
        copy.to_json()
    }
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

fn score(
    matrix: &FeatureMatrix,
    labels: Option<&LabelVector>,
    k: Option<usize>,
    config: &PipelineConfig,
) -> Result<Option<ClusterScores>> {
    let (Some(labels), Some(k)) = (labels, k) else {
        return Ok(None);
    };
    let predicted = spectral_clustering(matrix, k, config.sigma, &config.kmeans())?;
    Ok(Some(ClusterScores::compare(&predicted, labels)?))
}

fn record(
    theta: Option<f64>,
    retained: usize,
    subgraphs: usize,
    outcome: Result<Option<ClusterScores>>,
) -> SweepRecord {
    let (scores, error) = match outcome {
        Ok(s) => (s, None),
        Err(e) => (None, Some(e.to_string())),
    };
    SweepRecord {
        theta,
        retained,
        subgraphs,
        nmi: scores.map(|s| s.nmi),
        acc: scores.map(|s| s.acc),
        error,
    }
}

/// Runs the full protocol on `matrix`. Labels, when present, must have one
/// entry per sample.
pub fn run_pipeline(
    config: &PipelineConfig,
    matrix: &FeatureMatrix,
    labels: Option<&LabelVector>,
) -> Result<EvalReport> {
    config.validate()?;
    if config.require_labels && labels.is_none() {
        return Err(Error::Config(
            "labels are required but none were given".into(),
        ));
    }
    if let Some(l) = labels {
        if l.len() != matrix.n() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                l.len(),
                matrix.n()
            )));
        }
    }
    let k = config.k_clusters.or(labels.map(LabelVector::distinct));
    if let Some(k) = k {
        if k >= matrix.n() {
            return Err(Error::Config(format!(
                "cluster count {k} must be below the sample count {}",
                matrix.n()
            )));
        }
    }

    let mut timer = Timer(BTreeMap::new());
    let normalized = timer.time("normalize", || matrix.normalize_features());
    let features = &normalized.matrix;
    let omp_config = OmpConfig::new(config.epsilon)?;
    let graph = timer
        .time("build_sfg", || build_sfg(features, &omp_config))
        .map_err(|e| e.in_stage("build_sfg"))?;
    let angles = timer
        .time("angles", || {
            graph.angle_histogram(features, config.histogram_bins)
        })
        .map_err(|e| e.in_stage("angles"))?;
    let filtered = timer
        .time("filter_failed", || {
            graph.filter_failed(features, config.max_angle, config.angle_rule)
        })
        .map_err(|e| e.in_stage("filter_failed"))?;

    let baseline = timer.time("baseline", || {
        record(None, features.d(), 0, score(features, labels, k, config))
    });

    let reductions: Vec<Result<(usize, FeatureMatrix)>> = timer.time("lcs", || {
        config
            .theta_list
            .iter()
            .map(|&theta| {
                let partition = find_lcs(&filtered, theta)?;
                let reduced = select_representatives(&partition, &filtered, config.drop_singletons);
                Ok((
                    partition.subgraphs.len(),
                    reduce_matrix(features, &reduced)?,
                ))
            })
            .collect()
    });

    let sweep: Vec<SweepRecord> = timer.time("sweep", || {
        config
            .theta_list
            .par_iter()
            .zip(reductions.par_iter())
            .map(|(&theta, reduction)| match reduction {
                Ok((subgraphs, reduced)) => record(
                    Some(theta),
                    reduced.d(),
                    *subgraphs,
                    score(reduced, labels, k, config),
                ),
                Err(e) => record(Some(theta), 0, 0, Err(Error::Config(e.to_string()))),
            })
            .collect()
    });

    let mcfs_grid = if !config.run_mcfs {
        None
    } else {
        let mut inputs: Vec<Option<&FeatureMatrix>> = vec![Some(features)];
        inputs.extend(reductions.iter().map(|r| r.as_ref().ok().map(|(_, m)| m)));
        Some(timer.time("mcfs", || mcfs_grid(&inputs, labels, k, config)))
    };

    Ok(EvalReport {
        config: config.clone(),
        samples: matrix.n(),
        features: matrix.d(),
        clusters: k,
        graph: GraphSummary {
            edges_built: graph.edge_count(),
            edges_kept: filtered.edge_count(),
            failed_nodes: filtered.failed_nodes().len(),
            zero_columns: normalized.zero_columns.clone(),
        },
        baseline,
        sweep,
        mcfs_grid,
        angle_histogram: AngleHistogram {
            bin_edges: angles.bin_edges,
            counts: angles.counts,
            overflow: angles.overflow,
        },
        timings_ms: timer.0,
    })
}

fn mcfs_grid(
    inputs: &[Option<&FeatureMatrix>],
    labels: Option<&LabelVector>,
    k: Option<usize>,
    config: &PipelineConfig,
) -> McfsGrid {
    let columns: Vec<Vec<Option<ClusterScores>>> = inputs
        .par_iter()
        .map(|input| {
            let Some(input) = input else {
                return vec![None; config.mcfs_counts.len()];
            };
            let embedding = k.and_then(|k| {
                gaussian_similarity(input, config.sigma)
                    .and_then(|g| spectral_embedding(&g, k))
                    .ok()
            });
            config
                .mcfs_counts
                .iter()
                .map(|&m| {
                    if m > input.d() {
                        return None;
                    }
                    let embedding = embedding.as_ref()?;
                    let selection = mcfs_select(input, embedding, m, m).ok()?;
                    let chosen = input.select_columns(&selection.selected).ok()?;
                    score(&chosen, labels, k, config).ok().flatten()
                })
                .collect()
        })
        .collect();
    let cells = (0..config.mcfs_counts.len())
        .map(|row| columns.iter().map(|col| col[row]).collect())
        .collect();
    McfsGrid {
        input_counts: inputs
            .iter()
            .map(|m| m.map_or(0, FeatureMatrix::d))
            .collect(),
        selected_counts: config.mcfs_counts.clone(),
        cells,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn sweep_csv(report: &EvalReport) -> String {
    let mut out = String::from("theta,retained,nmi,acc\n");
    for r in std::iter::once(&report.baseline).chain(&report.sweep) {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            opt(r.theta),
            r.retained,
            opt(r.nmi),
            opt(r.acc)
        );
    }
    out
}

/// Table layout: a `#f` header with the input feature counts, then one row
/// per selected-feature count for NMI followed by the same rows for ACC.
/// Invalid cells are written as `-`.
pub fn mcfs_grid_csv(grid: &McfsGrid) -> String {
    let mut out = String::from("metric,#f");
    for c in &grid.input_counts {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (metric, pick) in [
        (
            "nmi",
            (|s: &ClusterScores| s.nmi) as fn(&ClusterScores) -> f64,
        ),
        ("acc", |s: &ClusterScores| s.acc),
    ] {
        for (row, m) in grid.cells.iter().zip(&grid.selected_counts) {
            let _ = write!(out, "{metric},{m}");
            for cell in row {
                match cell {
                    Some(s) => {
                        let _ = write!(out, ",{}", pick(s));
                    }
                    None => out.push_str(",-"),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn angles_csv(hist: &AngleHistogram) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (k, count) in hist.counts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            hist.bin_edges[k],
            hist.bin_edges[k + 1],
            count
        );
    }
    let _ = writeln!(out, "NA,NA,{}", hist.overflow);
    out
}

/// Writes `report.json`, `sweep.csv`, `angles.csv`, and `mcfs_grid.csv`
/// when the grid is present.
pub fn report_render(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write("report.json", report.to_json()?)?;
    write("sweep.csv", sweep_csv(report))?;
    write("angles.csv", angles_csv(&report.angle_histogram))?;
    if let Some(grid) = &report.mcfs_grid {
        write("mcfs_grid.csv", mcfs_grid_csv(grid))?;
    }
    Ok(())
}
