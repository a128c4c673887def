//! Local compressible subgraphs: groups of features joined by strong
//! sparse-feature-graph edges, and the choice of one representative per
//! group.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::sfg::SparseFeatureGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcsPartition {
    /// Label per node, `1..=L`, in seed order.
    pub labels: Vec<usize>,
    /// Label groups with more than one node, in label order; each sorted.
    pub subgraphs: Vec<Vec<usize>>,
    /// Nodes whose label group has size one, sorted.
    pub singletons: Vec<usize>,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedFeatureSet {
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Representative of `subgraphs[k]`.
    pub representative_of: Vec<usize>,
}

/// Nodes in seed order: decreasing in-degree, then increasing index.
pub fn seed_order(graph: &SparseFeatureGraph) -> Vec<usize> {
    let deg = graph.in_degree();
    let mut order: Vec<usize> = (0..graph.node_count()).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
    order
}

/// Undirected adjacency over edges whose absolute weight, divided by the
/// largest absolute weight in the graph, is at least `theta`.
pub fn thresholded_adjacency(graph: &SparseFeatureGraph, theta: f64) -> Vec<Vec<usize>> {
    let max = graph.max_abs_weight();
    let mut adj = vec![Vec::new(); graph.node_count()];
    if max == 0.0 {
        return adj;
    }
    for (i, j, w) in graph.edges() {
        if w.abs() / max >= theta {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    adj
}

/// Labels nodes by breadth-first expansion from in-degree-ordered seeds
/// across edges of normalized weight at least `theta`.
pub fn find_lcs(graph: &SparseFeatureGraph, theta: f64) -> Result<LcsPartition> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Parameter(format!(
            "theta must lie in (0, 1], got {theta}"
        )));
    }
    let d = graph.node_count();
    let adj = thresholded_adjacency(graph, theta);
    let mut labels = vec![0usize; d];
    let mut current = 1;
    let mut queue = VecDeque::new();
    for seed in seed_order(graph) {
        if labels[seed] != 0 {
            continue;
        }
        labels[seed] = current;
        queue.push_back(seed);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if labels[v] == 0 {
                    labels[v] = current;
                    queue.push_back(v);
                }
            }
        }
        current += 1;
    }

    let mut groups = vec![Vec::new(); current - 1];
    for (node, &l) in labels.iter().enumerate() {
        groups[l - 1].push(node);
    }
    let mut subgraphs = Vec::new();
    let mut singletons = Vec::new();
    for g in groups {
        if g.len() > 1 {
            subgraphs.push(g);
        } else {
            singletons.extend(g);
        }
    }
    singletons.sort_unstable();
    Ok(LcsPartition {
        labels,
        subgraphs,
        singletons,
        theta,
    })
}

/// Keeps the highest in-degree node of each subgraph (lowest index on
/// ties). Singletons are kept unless `drop_singletons` is set.
pub fn select_representatives(
    partition: &LcsPartition,
    graph: &SparseFeatureGraph,
    drop_singletons: bool,
) -> ReducedFeatureSet {
    let deg = graph.in_degree();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut representative_of = Vec::with_capacity(partition.subgraphs.len());
    for sub in &partition.subgraphs {
        let rep = *sub
            .iter()
            .min_by(|&&a, &&b| deg[b].cmp(&deg[a]).then(a.cmp(&b)))
            .expect("subgraphs are non-empty");
        representative_of.push(rep);
        kept.push(rep);
        dropped.extend(sub.iter().copied().filter(|&v| v != rep));
    }
    if drop_singletons {
        dropped.extend_from_slice(&partition.singletons);
    } else {
        kept.extend_from_slice(&partition.singletons);
    }
    kept.sort_unstable();
    dropped.sort_unstable();
    ReducedFeatureSet {
        kept,
        dropped,
        representative_of,
    }
}

/// Projects the matrix onto the kept features.
pub fn reduce_matrix(
    features: &FeatureMatrix,
    reduced: &ReducedFeatureSet,
) -> Result<FeatureMatrix> {
    features.select_columns(&reduced.kept)
}

/// One line per subgraph with the representative first, then an `S:` line
/// listing singletons.
pub fn write_partition(
    partition: &LcsPartition,
    reduced: &ReducedFeatureSet,
    mut w: impl Write,
) -> std::io::Result<()> {
    for (sub, &rep) in partition.subgraphs.iter().zip(&reduced.representative_of) {
        let mut line = vec![rep.to_string()];
        line.extend(sub.iter().filter(|&&v| v != rep).map(usize::to_string));
        writeln!(w, "{}", line.join(","))?;
    }
    let s: Vec<String> = partition.singletons.iter().map(usize::to_string).collect();
    writeln!(w, "S:{}", s.join(","))?;
    w.flush()
}
