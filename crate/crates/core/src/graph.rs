//! Window graphs: one node per signal window, temporal-chain edges between
//! consecutive windows, plus edges to each node's `k` most cosine-similar
//! non-adjacent windows.
//!
//! Raw cosine `c ∈ [−1, 1]` is stored as the weight `(1 + c) / 2`, which keeps
//! weights non-negative for the degree normalization in the GCN layer while
//! preserving the ordering among dissimilar pairs.

use serde::{Deserialize, Serialize};

use crate::features::WindowFeatures;
use crate::sim::{FaultFamily, FaultSpec};
use crate::{Error, Result};

/// `x·y / (‖x‖‖y‖)`.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine_similarity",
            left: (1, x.len()),
            right: (1, y.len()),
        });
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx <= 1e-12 || ny <= 1e-12 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// Maps a cosine in `[−1, 1]` to an edge weight in `[0, 1]`.
pub fn similarity_weight(cosine: f64) -> f64 {
    ((1.0 + cosine) / 2.0).clamp(0.0, 1.0)
}

/// Undirected edge, stored once with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeTarget {
    pub anomaly: bool,
    pub severity: f64,
    pub family: Option<FaultFamily>,
}

impl NodeTarget {
    pub fn from_label(label: &FaultSpec) -> Self {
        Self {
            anomaly: label.is_fault(),
            severity: label.severity,
            family: label.family(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGraph {
    /// Source recording id.
    pub id: String,
    pub nodes: Vec<WindowFeatures>,
    pub edges: Vec<Edge>,
    pub targets: Vec<NodeTarget>,
    /// Label of the source recording.
    pub label: FaultSpec,
}

impl SignalGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.x.len())
    }

    /// Weight of edge `(i, j)` in either orientation.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges.iter().find(|e| e.i == a && e.j == b).map(|e| e.weight)
    }

    /// Both orientations of every stored edge.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges
            .iter()
            .flat_map(|e| [(e.i, e.j, e.weight), (e.j, e.i, e.weight)])
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }

    pub fn label_family(&self) -> Option<FaultFamily> {
        self.targets.first().and_then(|t| t.family)
    }
}

/// Builds the window graph of one recording.
pub fn build_graph(
    id: impl Into<String>,
    windows: Vec<WindowFeatures>,
    k: usize,
    label: &FaultSpec,
) -> Result<SignalGraph> {
    let n = windows.len();
    if n < 2 {
        return Err(Error::TooFewWindows(n));
    }
    let mut cos = vec![vec![0.0; n]; n];
    for i in 0..n {
        cos[i][i] = 1.0;
        for j in i + 1..n {
            let c = cosine_similarity(&windows[i].x, &windows[j].x)?;
            cos[i][j] = c;
            cos[j][i] = c;
        }
    }

    let mut linked = vec![vec![false; n]; n];
    for i in 0..n - 1 {
        linked[i][i + 1] = true;
    }
    for (i, sims) in cos.iter().enumerate() {
        let mut candidates: Vec<usize> = (0..n).filter(|&j| i.abs_diff(j) > 1).collect();
        // stable sort keeps lower indices first among equal similarities
        candidates.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
        for &j in candidates.iter().take(k) {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            linked[a][b] = true;
        }
    }

    let mut edges = Vec::new();
    for (i, row) in linked.iter().enumerate() {
        for (j, &on) in row.iter().enumerate().skip(i + 1) {
            if on {
                edges.push(Edge {
                    i,
                    j,
                    weight: similarity_weight(cos[i][j]),
                });
            }
        }
    }
    let targets = vec![NodeTarget::from_label(label); n];
    Ok(SignalGraph {
        id: id.into(),
        nodes: windows,
        edges,
        targets,
        label: *label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    /// Counts over ten equal-width weight bins on `[0, 1]`.
    pub weight_histogram: [usize; 10],
    pub min_degree: usize,
    pub max_degree: usize,
}

pub fn graph_stats(graph: &SignalGraph) -> GraphStats {
    let mut weight_histogram = [0; 10];
    for e in &graph.edges {
        let bin = ((e.weight * 10.0) as usize).min(9);
        weight_histogram[bin] += 1;
    }
    let deg = graph.degrees();
    GraphStats {
        nodes: graph.node_count(),
        edges: graph.edges.len(),
        weight_histogram,
        min_degree: deg.iter().copied().min().unwrap_or(0),
        max_degree: deg.iter().copied().max().unwrap_or(0),
    }
}

impl std::fmt::Display for GraphStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "nodes={} edges={} degree=[{}, {}] weights={:?}",
            self.nodes, self.edges, self.min_degree, self.max_degree, self.weight_histogram
        )
    }
}
