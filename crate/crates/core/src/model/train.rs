use serde::{Deserialize, Serialize};

use super::network::{dropout_mask, forward, loss_and_gradients, Diagnosis, LossBreakdown};
use super::params::Params;
use super::ModelConfig;
use crate::graph::{cosine_similarity, similarity_weight, SignalGraph};
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::{Error, Result};

/// Trained parameters together with the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Params,
    /// Completed training epochs.
    pub epoch: usize,
}

impl ModelState {
    pub fn init(input_dim: usize, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            params: Params::init(input_dim, config),
            epoch: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-graph loss over the epoch's updates.
    pub train_loss: LossBreakdown,
    /// Graph-level anomaly accuracy on the validation graphs, if any.
    pub val_anomaly_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

/// Similarity target for one edge from its endpoint embeddings: `(1 + cos)/2`.
/// A zero embedding has no direction and counts as orthogonal.
pub fn reweighting_target(h_i: &[f64], h_j: &[f64]) -> Result<f64> {
    match cosine_similarity(h_i, h_j) {
        Ok(c) => Ok(similarity_weight(c)),
        Err(Error::ZeroVector) => Ok(0.5),
        Err(e) => Err(e),
    }
}

/// One reweighting pass: `w ← clamp((1 − β)·w + β·f, 0, 1)` for every edge.
pub fn reweight_edges(graph: &mut SignalGraph, hidden: &Matrix, beta: f64) -> Result<()> {
    if hidden.rows() != graph.node_count() {
        return Err(Error::ShapeMismatch {
            op: "reweight",
            left: (graph.node_count(), 1),
            right: hidden.shape(),
        });
    }
    for e in &mut graph.edges {
        let f = reweighting_target(hidden.row(e.i), hidden.row(e.j))?;
        e.weight = ((1.0 - beta) * e.weight + beta * f).clamp(0.0, 1.0);
    }
    Ok(())
}

fn reweight_with(graph: &mut SignalGraph, params: &Params, config: &ModelConfig) -> Result<()> {
    let fwd = forward(graph, params, config, None)?;
    let hidden = fwd.hidden1().clone();
    reweight_edges(graph, &hidden, config.beta)
}

fn check_dims(graphs: &[SignalGraph], expected: usize) -> Result<()> {
    for g in graphs {
        if g.feature_dim() != expected {
            return Err(Error::FeatureDimMismatch {
                expected,
                found: g.feature_dim(),
            });
        }
    }
    Ok(())
}

/// Trains on `graphs` with plain mini-batch SGD. Edge weights of the training
/// graphs are updated in place once per epoch, after that epoch's parameter
/// updates, unless the variant disables reweighting.
pub fn train(graphs: &mut [SignalGraph], val: &[SignalGraph], config: &ModelConfig) -> Result<(ModelState, TrainingLog)> {
    config.validate()?;
    let first = graphs.first().ok_or(Error::EmptyDataset)?;
    let input_dim = first.feature_dim();
    if input_dim != config.expected_input_dim() {
        return Err(Error::FeatureDimMismatch {
            expected: config.expected_input_dim(),
            found: input_dim,
        });
    }
    check_dims(graphs, input_dim)?;
    check_dims(val, input_dim)?;

    let mut state = ModelState::init(input_dim, config)?;
    let mut log = TrainingLog::default();
    let mut shuffle_rng = Rng::new(derive_seed(config.seed, "shuffle"));
    let mut dropout_rng = Rng::new(derive_seed(config.seed, "dropout"));
    let mut order: Vec<usize> = (0..graphs.len()).collect();

    for epoch in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sum = LossBreakdown::default();
        for batch in order.chunks(config.batch_size) {
            let mut grad = state.params.zeros_like();
            for &g in batch {
                let graph = &graphs[g];
                let mask = (config.dropout > 0.0).then(|| {
                    dropout_mask(&mut dropout_rng, graph.node_count(), config.gcn1_dim, config.dropout)
                });
                let fwd = forward(graph, &state.params, config, mask.as_ref())?;
                let (loss, g) = loss_and_gradients(&fwd, graph, &state.params, config)?;
                grad.axpy(1.0, &g)?;
                sum.anomaly += loss.anomaly;
                sum.severity += loss.severity;
                sum.type_ce += loss.type_ce;
                sum.total += loss.total;
            }
            state.params.axpy(-config.learning_rate / batch.len() as f64, &grad)?;
        }
        if !state.params.is_finite() {
            return Err(Error::NonFinite("model parameters after update"));
        }
        if config.ablation.reweights() {
            for graph in graphs.iter_mut() {
                reweight_with(graph, &state.params, config)?;
            }
        }
        state.epoch = epoch + 1;

        let n = graphs.len() as f64;
        let train_loss = LossBreakdown {
            anomaly: sum.anomaly / n,
            severity: sum.severity / n,
            type_ce: sum.type_ce / n,
            total: sum.total / n,
        };
        let val_anomaly_accuracy = if val.is_empty() {
            None
        } else {
            let mut correct = 0usize;
            for g in val {
                let d = predict(&state, g)?.decision();
                let truth = g.targets.first().is_some_and(|t| t.anomaly);
                correct += usize::from(d.is_anomaly == truth);
            }
            Some(correct as f64 / val.len() as f64)
        };
        log.epochs.push(EpochLog { epoch: epoch + 1, train_loss, val_anomaly_accuracy });
    }
    Ok((state, log))
}

/// Eval-mode prediction on an unseen graph. Variants that reweight first run
/// `inference_reweight_steps` reweighting passes on a copy of the graph.
pub fn predict(state: &ModelState, graph: &SignalGraph) -> Result<Diagnosis> {
    let config = &state.config;
    if graph.feature_dim() != state.input_dim() {
        return Err(Error::FeatureDimMismatch {
            expected: state.input_dim(),
            found: graph.feature_dim(),
        });
    }
    if config.ablation.reweights() && config.inference_reweight_steps > 0 {
        let mut g = graph.clone();
        for _ in 0..config.inference_reweight_steps {
            reweight_with(&mut g, &state.params, config)?;
        }
        Ok(forward(&g, &state.params, config, None)?.diagnosis)
    } else {
        Ok(forward(graph, &state.params, config, None)?.diagnosis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WindowFeatures;
    use crate::graph::{build_graph, Edge};
    use crate::model::Ablation;
    use crate::sim::FaultSpec;

    fn two_node_graph(w: f64) -> SignalGraph {
        let nodes = (0..2)
            .map(|i| WindowFeatures { x: vec![1.0], window_index: i, source: "g".into() })
            .collect();
        let mut g = build_graph("g", nodes, 0, &FaultSpec::healthy()).unwrap();
        g.edges = vec![Edge { i: 0, j: 1, weight: w }];
        g
    }

    // hidden rows with cosine 0.6, so the target is exactly 0.8
    fn hidden_for_target_08() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap()
    }

    #[test]
    fn target_of_identical_and_opposite_embeddings() {
        assert!((reweighting_target(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(reweighting_target(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(reweighting_target(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn beta_zero_keeps_weights() {
        let mut g = two_node_graph(0.4);
        reweight_edges(&mut g, &hidden_for_target_08(), 0.0).unwrap();
        assert_eq!(g.edges[0].weight.to_bits(), 0.4f64.to_bits());
    }

    #[test]
    fn beta_one_sets_target() {
        let h = hidden_for_target_08();
        let f = reweighting_target(h.row(0), h.row(1)).unwrap();
        let mut g = two_node_graph(0.4);
        reweight_edges(&mut g, &h, 1.0).unwrap();
        assert_eq!(g.edges[0].weight, f);
    }

    #[test]
    fn half_blend_example() {
        let mut g = two_node_graph(0.4);
        let h = hidden_for_target_08();
        assert_eq!(reweighting_target(h.row(0), h.row(1)).unwrap(), 0.8);
        reweight_edges(&mut g, &h, 0.5).unwrap();
        // 0.5·0.4 + 0.5·0.8 rounds up by one ulp in binary floating point
        let w = g.edges[0].weight;
        assert!((w - 0.6).abs() <= f64::EPSILON * 0.6, "{w}");
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let mut rng = Rng::new(1);
        let nodes: Vec<WindowFeatures> = (0..5)
            .map(|i| WindowFeatures { x: (0..20).map(|_| rng.normal(0.0, 1.0)).collect(), window_index: i, source: "g".into() })
            .collect();
        let mut graphs = vec![build_graph("g", nodes, 2, &FaultSpec::healthy()).unwrap()];
        let config = ModelConfig { epochs: 0, ..Default::default() };
        let (state, log) = train(&mut graphs, &[], &config).unwrap();
        assert_eq!(state.params, Params::init(20, &config));
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn wrong_feature_width_is_rejected() {
        let nodes: Vec<WindowFeatures> =
            (0..3).map(|i| WindowFeatures { x: vec![1.0, i as f64], window_index: i, source: "g".into() }).collect();
        let mut graphs = vec![build_graph("g", nodes, 1, &FaultSpec::healthy()).unwrap()];
        let r = train(&mut graphs, &[], &ModelConfig::default());
        assert!(matches!(r, Err(Error::FeatureDimMismatch { expected: 20, found: 2 })));
        assert!(matches!(train(&mut [], &[], &ModelConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn no_reweight_variant_leaves_edges_alone() {
        let mut rng = Rng::new(2);
        let nodes: Vec<WindowFeatures> = (0..6)
            .map(|i| WindowFeatures { x: (0..20).map(|_| rng.normal(0.0, 1.0)).collect(), window_index: i, source: "g".into() })
            .collect();
        let g = build_graph("g", nodes, 2, &FaultSpec::broken_bars(2)).unwrap();
        let config = ModelConfig { epochs: 3, ablation: Ablation::NoReweight, ..Default::default() };
        let mut graphs = vec![g.clone()];
        train(&mut graphs, &[], &config).unwrap();
        assert_eq!(graphs[0].edges, g.edges);
        let config = ModelConfig { ablation: Ablation::Full, ..config };
        let mut graphs = vec![g.clone()];
        train(&mut graphs, &[], &config).unwrap();
        assert_ne!(graphs[0].edges, g.edges);
        assert!(graphs[0].edges.iter().all(|e| (0.0..=1.0).contains(&e.weight)));
    }
}
