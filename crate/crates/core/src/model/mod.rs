//! The graph network: a learned input embedding, two degree-normalized graph
//! convolutions, per-epoch dynamic edge reweighting, and three node heads
//! (anomaly probability, severity score, fault-type distribution).
//!
//! Gradients are derived by hand and checked against central finite
//! differences in the test suite.

mod check;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use check::{gradient_check, TensorCheck};
pub use network::{
    dropout_mask, forward, gcn_layer, loss_and_gradients, Activation, Adjacency, Diagnosis, Forward,
    GraphDecision, LossBreakdown,
};
pub use params::Params;
pub use train::{
    predict, reweight_edges, reweighting_target, train, EpochLog, ModelState, TrainingLog,
};

/// Architecture variant used in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Edge weights stay at their initial cosine values.
    NoReweight,
    /// Severity head removed.
    NoSeverity,
    /// Trained on time-domain features only.
    NoFreqFeatures,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoReweight,
        Ablation::NoSeverity,
        Ablation::NoFreqFeatures,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Ablation::Full => "GNN-ASE",
            Ablation::NoReweight => "GNN-ASE@1",
            Ablation::NoSeverity => "GNN-ASE@2",
            Ablation::NoFreqFeatures => "GNN-ASE@3",
        }
    }

    pub fn has_severity(self) -> bool {
        self != Ablation::NoSeverity
    }

    pub fn reweights(self) -> bool {
        self != Ablation::NoReweight
    }
}

/// How the severity head turns its 32-unit hidden layer into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeverityMode {
    /// Scalar ReLU output trained with squared error.
    #[default]
    Regression,
    /// Softmax over `bins` evenly spaced severity levels trained with
    /// cross-entropy; the score is the expected level.
    Bins { bins: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub gcn1_dim: usize,
    pub gcn2_dim: usize,
    pub severity_dim: usize,
    pub type_classes: usize,
    /// Signal channels per window; the input dimension is
    /// `channels × features-per-channel`.
    pub channels: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Reweighting degree in `[0, 1]`.
    pub beta: f64,
    pub epochs: usize,
    /// Graphs per gradient step.
    pub batch_size: usize,
    pub lambda_anomaly: f64,
    pub lambda_severity: f64,
    pub lambda_type: f64,
    pub ablation: Ablation,
    pub severity_mode: SeverityMode,
    /// Block severity-loss gradients from reaching the shared layers.
    pub detach_severity: bool,
    /// Regression mode only: apply the output ReLU inside the squared error.
    /// When false the error is taken on the pre-activation and the ReLU only
    /// clamps the reported score, so the output unit cannot die.
    pub relu_in_severity_loss: bool,
    /// Reweighting passes applied to unseen graphs before inference.
    pub inference_reweight_steps: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            gcn1_dim: 64,
            gcn2_dim: 64,
            severity_dim: 32,
            type_classes: 3,
            channels: 4,
            learning_rate: 0.01,
            dropout: 0.5,
            beta: 0.3,
            epochs: 150,
            batch_size: 1,
            lambda_anomaly: 1.0,
            lambda_severity: 1.0,
            lambda_type: 1.0,
            ablation: Ablation::Full,
            severity_mode: SeverityMode::Regression,
            detach_severity: true,
            relu_in_severity_loss: false,
            inference_reweight_steps: 20,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModelConfig(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if [self.embed_dim, self.gcn1_dim, self.gcn2_dim, self.severity_dim, self.type_classes]
            .contains(&0)
        {
            return bad("layer dimensions must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if let SeverityMode::Bins { bins } = self.severity_mode {
            if bins < 2 {
                return bad("severity bins must be >= 2".into());
            }
        }
        Ok(())
    }

    /// Features per channel implied by the ablation variant.
    pub fn features_per_channel(&self) -> usize {
        match self.ablation {
            Ablation::NoFreqFeatures => 3,
            _ => 5,
        }
    }

    pub fn expected_input_dim(&self) -> usize {
        self.channels * self.features_per_channel()
    }

    /// Output width of the final severity layer.
    pub fn severity_outputs(&self) -> usize {
        match self.severity_mode {
            SeverityMode::Regression => 1,
            SeverityMode::Bins { bins } => bins,
        }
    }
}
