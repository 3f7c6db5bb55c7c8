use serde::{Deserialize, Serialize};

use super::params::{Params, SeverityParams};
use super::{ModelConfig, SeverityMode};
use crate::graph::{Edge, SignalGraph};
use crate::numerics::{Matrix, Rng};
use crate::sim::FaultFamily;
use crate::{Error, Result};

/// Symmetric normalized adjacency `D^{-1/2}(A + I)D^{-1/2}` in row-sparse form,
/// where `A` holds the edge weights and `D` the weighted degrees including the
/// unit self-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    pub fn new(n: usize, edges: &[Edge]) -> Result<Self> {
        let mut degree = vec![1.0; n];
        for e in edges {
            if !(e.weight >= 0.0) {
                return Err(Error::NegativeWeight { i: e.i, j: e.j, weight: e.weight });
            }
            if e.i >= n || e.j >= n {
                return Err(Error::ShapeMismatch { op: "adjacency", left: (n, n), right: (e.i, e.j) });
            }
            degree[e.i] += e.weight;
            degree[e.j] += e.weight;
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, inv_sqrt[i] * inv_sqrt[i])]).collect();
        for e in edges {
            let c = e.weight * inv_sqrt[e.i] * inv_sqrt[e.j];
            rows[e.i].push((e.j, c));
            rows[e.j].push((e.i, c));
        }
        Ok(Self { rows })
    }

    pub fn from_graph(graph: &SignalGraph) -> Result<Self> {
        Self::new(graph.node_count(), &graph.edges)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `Â · h`. Since `Â` is symmetric this is also its transpose product.
    pub fn aggregate(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.rows.len() {
            return Err(Error::ShapeMismatch {
                op: "aggregate",
                left: (self.rows.len(), self.rows.len()),
                right: h.shape(),
            });
        }
        let mut out = Matrix::zeros(h.rows(), h.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let dst = out.row_mut(i);
            for &(j, c) in row {
                for (o, v) in dst.iter_mut().zip(h.row(j)) {
                    *o += c * v;
                }
            }
        }
        Ok(out)
    }

    /// Dense `n × n` form.
    pub fn to_dense(&self) -> Matrix {
        let n = self.rows.len();
        let mut m = Matrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                m[(i, j)] += c;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, m: &mut Matrix) {
        if self == Activation::Relu {
            m.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

/// One graph convolution: `σ(Â · h · W + b)`.
pub fn gcn_layer(
    h: &Matrix,
    adjacency: &Adjacency,
    weight: &Matrix,
    bias: Option<&Matrix>,
    activation: Activation,
) -> Result<Matrix> {
    let mut z = adjacency.aggregate(h)?.matmul(weight)?;
    if let Some(b) = bias {
        z.add_row_broadcast(b)?;
    }
    activation.apply(&mut z);
    Ok(z)
}

/// Inverted-dropout mask: entries are `0` with probability `p`, else `1/(1−p)`.
pub fn dropout_mask(rng: &mut Rng, rows: usize, cols: usize, p: f64) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    Matrix::from_fn(rows, cols, |_, _| if rng.bernoulli(p) { 0.0 } else { keep })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, computed from the logit.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..z.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn relu_mask_inplace(grad: &mut Matrix, pre: &Matrix) {
    for (g, z) in grad.data_mut().iter_mut().zip(pre.data()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Per-node outputs of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub anomaly: Vec<f64>,
    /// Absent when the severity head is ablated.
    pub severity: Option<Vec<f64>>,
    /// One distribution over fault families per node.
    pub type_probs: Vec<Vec<f64>>,
}

/// Graph-level summary of a [`Diagnosis`] (mean-pooled over nodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDecision {
    pub anomaly_probability: f64,
    pub is_anomaly: bool,
    pub severity: Option<f64>,
    pub type_distribution: Vec<f64>,
    pub family: FaultFamily,
}

impl Diagnosis {
    pub fn node_count(&self) -> usize {
        self.anomaly.len()
    }

    pub fn decision(&self) -> GraphDecision {
        let n = self.node_count().max(1) as f64;
        let anomaly_probability = self.anomaly.iter().sum::<f64>() / n;
        let classes = self.type_probs.first().map_or(0, Vec::len);
        let mut type_distribution = vec![0.0; classes];
        for p in &self.type_probs {
            for (acc, v) in type_distribution.iter_mut().zip(p) {
                *acc += v / n;
            }
        }
        let best = type_distribution
            .iter()
            .enumerate()
            .fold(0, |b, (k, v)| if *v > type_distribution[b] { k } else { b });
        GraphDecision {
            anomaly_probability,
            is_anomaly: anomaly_probability > 0.5,
            severity: self.severity.as_ref().map(|s| s.iter().sum::<f64>() / n),
            type_distribution,
            family: FaultFamily::from_index(best).unwrap_or(FaultFamily::Eccentricity),
        }
    }
}

#[derive(Debug, Clone)]
struct SeverityCache {
    hidden_pre: Matrix,
    hidden: Matrix,
    out_pre: Matrix,
    /// Bin probabilities in bins mode.
    probs: Option<Matrix>,
}

/// Forward pass result with the activations needed for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub diagnosis: Diagnosis,
    adjacency: Adjacency,
    x: Matrix,
    agg_embed: Matrix,
    z1: Matrix,
    h1: Matrix,
    mask: Option<Matrix>,
    agg_h1: Matrix,
    z2: Matrix,
    h2: Matrix,
    anomaly_logit: Matrix,
    type_probs: Matrix,
    severity: Option<SeverityCache>,
}

impl Forward {
    /// First-layer node embeddings (before dropout).
    pub fn hidden1(&self) -> &Matrix {
        &self.h1
    }

    pub fn hidden2(&self) -> &Matrix {
        &self.h2
    }

    /// Smallest `|pre-activation|` over every ReLU in the network. Finite
    /// differences with a step well below this never cross a kink.
    pub fn relu_margin(&self) -> f64 {
        let mut layers = vec![&self.z1, &self.z2];
        if let Some(s) = &self.severity {
            layers.push(&s.hidden_pre);
            if s.probs.is_none() {
                layers.push(&s.out_pre);
            }
        }
        layers
            .into_iter()
            .flat_map(|m| m.data().iter())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

fn features_matrix(graph: &SignalGraph) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = graph.nodes.iter().map(|n| n.x.clone()).collect();
    Matrix::from_rows(&rows)
}

/// Runs the network on one graph. `dropout` is the mask applied after the
/// first convolution (train mode); `None` runs in eval mode.
pub fn forward(graph: &SignalGraph, params: &Params, config: &ModelConfig, dropout: Option<&Matrix>) -> Result<Forward> {
    let x = features_matrix(graph)?;
    if x.cols() != params.input_dim() {
        return Err(Error::FeatureDimMismatch {
            expected: params.input_dim(),
            found: x.cols(),
        });
    }
    let adjacency = Adjacency::from_graph(graph)?;

    let mut embed = x.matmul(&params.embed_w)?;
    embed.add_row_broadcast(&params.embed_b)?;
    let agg_embed = adjacency.aggregate(&embed)?;
    let mut z1 = agg_embed.matmul(&params.gcn1_w)?;
    z1.add_row_broadcast(&params.gcn1_b)?;
    let mut h1 = z1.clone();
    Activation::Relu.apply(&mut h1);

    let h1_dropped = match dropout {
        Some(mask) => {
            if mask.shape() != h1.shape() {
                return Err(Error::ShapeMismatch { op: "dropout", left: h1.shape(), right: mask.shape() });
            }
            Matrix::from_fn(h1.rows(), h1.cols(), |i, j| h1[(i, j)] * mask[(i, j)])
        }
        None => h1.clone(),
    };
    let agg_h1 = adjacency.aggregate(&h1_dropped)?;
    let mut z2 = agg_h1.matmul(&params.gcn2_w)?;
    z2.add_row_broadcast(&params.gcn2_b)?;
    let mut h2 = z2.clone();
    Activation::Relu.apply(&mut h2);

    let mut anomaly_logit = h2.matmul(&params.anomaly_w)?;
    anomaly_logit.add_row_broadcast(&params.anomaly_b)?;
    let mut type_logits = h2.matmul(&params.type_w)?;
    type_logits.add_row_broadcast(&params.type_b)?;
    let type_probs = softmax_rows(&type_logits);

    let severity = match &params.severity {
        Some(sp) => Some(severity_forward(&h2, sp, config)?),
        None => None,
    };
    let severity_scores = severity.as_ref().map(|s| match &s.probs {
        None => s.out_pre.data().iter().map(|v| v.max(0.0)).collect(),
        Some(p) => {
            let bins = p.cols();
            (0..p.rows())
                .map(|i| p.row(i).iter().enumerate().map(|(b, q)| q * b as f64 / (bins - 1) as f64).sum())
                .collect()
        }
    });

    let diagnosis = Diagnosis {
        anomaly: anomaly_logit.data().iter().map(|&z| sigmoid(z)).collect(),
        severity: severity_scores,
        type_probs: (0..type_probs.rows()).map(|i| type_probs.row(i).to_vec()).collect(),
    };
    Ok(Forward {
        diagnosis,
        adjacency,
        x,
        agg_embed,
        z1,
        h1,
        mask: dropout.cloned(),
        agg_h1,
        z2,
        h2,
        anomaly_logit,
        type_probs,
        severity,
    })
}

fn severity_forward(h2: &Matrix, sp: &SeverityParams, config: &ModelConfig) -> Result<SeverityCache> {
    let mut hidden_pre = h2.matmul(&sp.hidden_w)?;
    hidden_pre.add_row_broadcast(&sp.hidden_b)?;
    let mut hidden = hidden_pre.clone();
    Activation::Relu.apply(&mut hidden);
    let mut out_pre = hidden.matmul(&sp.out_w)?;
    out_pre.add_row_broadcast(&sp.out_b)?;
    let probs = match config.severity_mode {
        SeverityMode::Regression => None,
        SeverityMode::Bins { .. } => Some(softmax_rows(&out_pre)),
    };
    Ok(SeverityCache { hidden_pre, hidden, out_pre, probs })
}

/// Weighted loss terms, each a mean over the nodes it applies to.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub anomaly: f64,
    pub severity: f64,
    pub type_ce: f64,
    /// `λ_a·anomaly + λ_s·severity + λ_t·type_ce`.
    pub total: f64,
}

fn severity_bin(severity: f64, bins: usize) -> usize {
    ((severity.clamp(0.0, 1.0) * (bins - 1) as f64).round() as usize).min(bins - 1)
}

/// Multi-task loss and its gradient with respect to every parameter.
///
/// Anomaly: binary cross-entropy. Severity: squared error against the
/// normalized label (or cross-entropy over bins). Type: cross-entropy over
/// anomalous nodes only. Edge weights are constants.
pub fn loss_and_gradients(
    fwd: &Forward,
    graph: &SignalGraph,
    params: &Params,
    config: &ModelConfig,
) -> Result<(LossBreakdown, Params)> {
    let n = graph.node_count();
    if graph.targets.len() != n {
        return Err(Error::ShapeMismatch { op: "targets", left: (n, 1), right: (graph.targets.len(), 1) });
    }
    let nf = n as f64;
    let mut grads = params.zeros_like();
    let mut loss = LossBreakdown::default();

    // anomaly head
    let mut d_anom = Matrix::zeros(n, 1);
    for (i, t) in graph.targets.iter().enumerate() {
        let y = if t.anomaly { 1.0 } else { 0.0 };
        let z = fwd.anomaly_logit[(i, 0)];
        loss.anomaly += bce_with_logit(z, y) / nf;
        d_anom[(i, 0)] = config.lambda_anomaly * (sigmoid(z) - y) / nf;
    }
    grads.anomaly_w = fwd.h2.t_matmul(&d_anom)?;
    grads.anomaly_b = d_anom.column_sums();
    let mut d_h2 = d_anom.matmul_t(&params.anomaly_w)?;

    // type head, masked to anomalous nodes
    let classes = fwd.type_probs.cols();
    let n_anom = graph.targets.iter().filter(|t| t.anomaly).count();
    let mut d_type = Matrix::zeros(n, classes);
    if n_anom > 0 {
        let na = n_anom as f64;
        for (i, t) in graph.targets.iter().enumerate() {
            if !t.anomaly {
                continue;
            }
            let Some(family) = t.family else { continue };
            let c = family.index();
            loss.type_ce += -fwd.type_probs[(i, c)].max(f64::MIN_POSITIVE).ln() / na;
            for k in 0..classes {
                let onehot = if k == c { 1.0 } else { 0.0 };
                d_type[(i, k)] = config.lambda_type * (fwd.type_probs[(i, k)] - onehot) / na;
            }
        }
    }
    grads.type_w = fwd.h2.t_matmul(&d_type)?;
    grads.type_b = d_type.column_sums();
    d_h2.axpy(1.0, &d_type.matmul_t(&params.type_w)?)?;

    // severity head
    if let (Some(sp), Some(cache), Some(gs)) = (&params.severity, &fwd.severity, grads.severity.as_mut()) {
        let mut d_out = Matrix::zeros(n, cache.out_pre.cols());
        match &cache.probs {
            None => {
                for (i, t) in graph.targets.iter().enumerate() {
                    let z = cache.out_pre[(i, 0)];
                    let s = if config.relu_in_severity_loss { z.max(0.0) } else { z };
                    loss.severity += (s - t.severity).powi(2) / nf;
                    if !config.relu_in_severity_loss || z > 0.0 {
                        d_out[(i, 0)] = config.lambda_severity * 2.0 * (s - t.severity) / nf;
                    }
                }
            }
            Some(p) => {
                let bins = p.cols();
                for (i, t) in graph.targets.iter().enumerate() {
                    let b = severity_bin(t.severity, bins);
                    loss.severity += -p[(i, b)].max(f64::MIN_POSITIVE).ln() / nf;
                    for k in 0..bins {
                        let onehot = if k == b { 1.0 } else { 0.0 };
                        d_out[(i, k)] = config.lambda_severity * (p[(i, k)] - onehot) / nf;
                    }
                }
            }
        }
        gs.out_w = cache.hidden.t_matmul(&d_out)?;
        gs.out_b = d_out.column_sums();
        let mut d_hidden = d_out.matmul_t(&sp.out_w)?;
        relu_mask_inplace(&mut d_hidden, &cache.hidden_pre);
        gs.hidden_w = fwd.h2.t_matmul(&d_hidden)?;
        gs.hidden_b = d_hidden.column_sums();
        if !config.detach_severity {
            d_h2.axpy(1.0, &d_hidden.matmul_t(&sp.hidden_w)?)?;
        }
    }

    // second convolution
    let mut d_z2 = d_h2;
    relu_mask_inplace(&mut d_z2, &fwd.z2);
    grads.gcn2_w = fwd.agg_h1.t_matmul(&d_z2)?;
    grads.gcn2_b = d_z2.column_sums();
    let mut d_h1 = fwd.adjacency.aggregate(&d_z2.matmul_t(&params.gcn2_w)?)?;
    if let Some(mask) = &fwd.mask {
        for (g, m) in d_h1.data_mut().iter_mut().zip(mask.data()) {
            *g *= m;
        }
    }

    // first convolution
    let mut d_z1 = d_h1;
    relu_mask_inplace(&mut d_z1, &fwd.z1);
    grads.gcn1_w = fwd.agg_embed.t_matmul(&d_z1)?;
    grads.gcn1_b = d_z1.column_sums();
    let d_embed = fwd.adjacency.aggregate(&d_z1.matmul_t(&params.gcn1_w)?)?;

    // embedding
    grads.embed_w = fwd.x.t_matmul(&d_embed)?;
    grads.embed_b = d_embed.column_sums();

    loss.total = config.lambda_anomaly * loss.anomaly
        + config.lambda_severity * loss.severity
        + config.lambda_type * loss.type_ce;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WindowFeatures;
    use crate::graph::{build_graph, NodeTarget};
    use crate::model::Ablation;
    use crate::sim::FaultSpec;

    fn graph_from(rows: &[Vec<f64>], edges: Vec<Edge>) -> SignalGraph {
        SignalGraph {
            id: "g".into(),
            nodes: rows
                .iter()
                .enumerate()
                .map(|(i, x)| WindowFeatures { x: x.clone(), window_index: i, source: "g".into() })
                .collect(),
            edges,
            targets: vec![NodeTarget::from_label(&FaultSpec::healthy()); rows.len()],
            label: FaultSpec::healthy(),
        }
    }

    /// Independent dense evaluation: D^{-1/2}(A+I)D^{-1/2} · H · W.
    fn dense_gcn(n: usize, edges: &[Edge], h: &Matrix, w: &Matrix) -> Matrix {
        let mut a = Matrix::identity(n);
        for e in edges {
            a[(e.i, e.j)] += e.weight;
            a[(e.j, e.i)] += e.weight;
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        let norm = Matrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt());
        norm.matmul(h).unwrap().matmul(w).unwrap()
    }

    #[test]
    fn single_node_identity() {
        let h = Matrix::from_rows(&[vec![0.3, -1.2, 4.0]]).unwrap();
        let adj = Adjacency::new(1, &[]).unwrap();
        let out = gcn_layer(&h, &adj, &Matrix::identity(3), None, Activation::Identity).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn two_nodes_hand_value() {
        let h = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let adj = Adjacency::new(2, &[Edge { i: 0, j: 1, weight: 1.0 }]).unwrap();
        let out = gcn_layer(&h, &adj, &Matrix::identity(1), None, Activation::Identity).unwrap();
        assert!((out[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((out[(1, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sparse_matches_dense_oracle() {
        let mut rng = Rng::new(21);
        for _ in 0..100 {
            let n = 1 + (rng.next_u64() % 10) as usize;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.bernoulli(0.4) {
                        edges.push(Edge { i, j, weight: rng.uniform(0.0, 1.0) });
                    }
                }
            }
            let h = Matrix::from_fn(n, 5, |_, _| rng.uniform(-1.0, 1.0));
            let w = Matrix::from_fn(5, 3, |_, _| rng.uniform(-1.0, 1.0));
            let adj = Adjacency::new(n, &edges).unwrap();
            let sparse = gcn_layer(&h, &adj, &w, None, Activation::Identity).unwrap();
            assert!(sparse.max_abs_diff(&dense_gcn(n, &edges, &h, &w)) < 1e-10);
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let r = Adjacency::new(2, &[Edge { i: 0, j: 1, weight: -0.1 }]);
        assert!(matches!(r, Err(Error::NegativeWeight { .. })));
    }

    #[test]
    fn zero_parameters_give_neutral_outputs() {
        let config = ModelConfig::default();
        let g = graph_from(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]], vec![Edge { i: 0, j: 1, weight: 0.5 }]);
        let params = Params::init(2, &config).zeros_like();
        let f = forward(&g, &params, &config, None).unwrap();
        assert!(f.diagnosis.anomaly.iter().all(|&p| p == 0.5));
        assert!(f.diagnosis.severity.as_ref().unwrap().iter().all(|&s| s == 0.0));
        for p in &f.diagnosis.type_probs {
            assert!(p.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn uniform_type_prediction_costs_ln3() {
        let config = ModelConfig::default();
        let mut g = graph_from(&[vec![1.0], vec![2.0]], vec![Edge { i: 0, j: 1, weight: 1.0 }]);
        g.targets = vec![NodeTarget::from_label(&FaultSpec::broken_bars(3)); 2];
        let params = Params::init(1, &config).zeros_like();
        let f = forward(&g, &params, &config, None).unwrap();
        let (loss, _) = loss_and_gradients(&f, &g, &params, &config).unwrap();
        assert!((loss.type_ce - 3f64.ln()).abs() < 1e-12);
        assert!((loss.anomaly - 2f64.ln()).abs() < 1e-12);
        assert!((loss.severity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_have_near_zero_loss() {
        let config = ModelConfig::default();
        let mut g = graph_from(&[vec![1.0], vec![2.0]], vec![Edge { i: 0, j: 1, weight: 1.0 }]);
        let label = FaultSpec::broken_bars(3);
        g.targets = vec![NodeTarget::from_label(&label); 2];
        let mut params = Params::init(1, &config).zeros_like();
        params.anomaly_b[(0, 0)] = 40.0;
        params.type_b[(0, 1)] = 40.0;
        params.severity.as_mut().unwrap().out_b[(0, 0)] = 1.0;
        let f = forward(&g, &params, &config, None).unwrap();
        let (loss, _) = loss_and_gradients(&f, &g, &params, &config).unwrap();
        assert!(loss.anomaly >= 0.0 && loss.anomaly < 1e-15);
        assert_eq!(loss.severity, 0.0);
        assert!(loss.type_ce >= 0.0 && loss.type_ce < 1e-15);
    }

    #[test]
    fn outputs_are_valid_distributions() {
        let mut rng = Rng::new(5);
        let config = ModelConfig::default();
        let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..20).map(|_| rng.normal(0.0, 3.0)).collect()).collect();
        let g = build_graph("g", graph_from(&rows, vec![]).nodes, 2, &FaultSpec::healthy()).unwrap();
        let params = Params::init(20, &config);
        let f = forward(&g, &params, &config, None).unwrap();
        for p in &f.diagnosis.type_probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(f.diagnosis.anomaly.iter().all(|&a| a > 0.0 && a < 1.0));
        let again = forward(&g, &params, &config, None).unwrap();
        assert_eq!(f.diagnosis, again.diagnosis);
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = Rng::new(9);
        let h = Matrix::from_fn(4, 16, |_, _| rng.uniform(0.0, 2.0));
        let trials = 10_000;
        let mut acc = Matrix::zeros(4, 16);
        for _ in 0..trials {
            let m = dropout_mask(&mut rng, 4, 16, 0.5);
            for (a, (x, k)) in acc.data_mut().iter_mut().zip(h.data().iter().zip(m.data())) {
                *a += x * k / trials as f64;
            }
        }
        for (a, x) in acc.data().iter().zip(h.data()) {
            assert!((a - x).abs() <= 0.03 * x.max(0.5), "{a} vs {x}");
        }
    }

    #[test]
    fn ablated_severity_head_leaves_other_outputs_unchanged() {
        let mut rng = Rng::new(13);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..20).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
        let g = build_graph("g", graph_from(&rows, vec![]).nodes, 2, &FaultSpec::broken_bars(1)).unwrap();
        let full = ModelConfig { seed: 4, ..Default::default() };
        let ablated = ModelConfig { ablation: Ablation::NoSeverity, ..full.clone() };
        let a = forward(&g, &Params::init(20, &full), &full, None).unwrap();
        let b = forward(&g, &Params::init(20, &ablated), &ablated, None).unwrap();
        assert_eq!(a.diagnosis.anomaly, b.diagnosis.anomaly);
        assert_eq!(a.diagnosis.type_probs, b.diagnosis.type_probs);
        assert!(b.diagnosis.severity.is_none());
    }

    #[test]
    fn node_permutation_equivariance() {
        let mut rng = Rng::new(17);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..20).map(|_| rng.normal(0.0, 1.0)).collect()).collect();
        let g = build_graph("g", graph_from(&rows, vec![]).nodes, 2, &FaultSpec::healthy()).unwrap();
        let perm = [4usize, 2, 0, 5, 1, 3]; // new index -> old index
        let mut inv = [0usize; 6];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut p = g.clone();
        p.nodes = perm.iter().map(|&o| g.nodes[o].clone()).collect();
        p.edges = g
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (inv[e.i], inv[e.j]);
                Edge { i: a.min(b), j: a.max(b), weight: e.weight }
            })
            .collect();
        let config = ModelConfig::default();
        let params = Params::init(20, &config);
        let a = forward(&g, &params, &config, None).unwrap().diagnosis;
        let b = forward(&p, &params, &config, None).unwrap().diagnosis;
        for (new, &old) in perm.iter().enumerate() {
            assert!((a.anomaly[old] - b.anomaly[new]).abs() < 1e-12);
            for k in 0..3 {
                assert!((a.type_probs[old][k] - b.type_probs[new][k]).abs() < 1e-12);
            }
        }
    }
}
