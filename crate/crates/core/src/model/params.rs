use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::{Error, Result};

/// Severity head: hidden ReLU layer, then the score layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityParams {
    pub hidden_w: Matrix,
    pub hidden_b: Matrix,
    pub out_w: Matrix,
    pub out_b: Matrix,
}

/// All trainable tensors. Biases are `1 × width` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub embed_w: Matrix,
    pub embed_b: Matrix,
    pub gcn1_w: Matrix,
    pub gcn1_b: Matrix,
    pub gcn2_w: Matrix,
    pub gcn2_b: Matrix,
    pub anomaly_w: Matrix,
    pub anomaly_b: Matrix,
    pub type_w: Matrix,
    pub type_b: Matrix,
    pub severity: Option<SeverityParams>,
}

/// Glorot-uniform weights in `±√(6/(fan_in + fan_out))`, one stream per tensor.
fn glorot(seed: u64, name: &str, fan_in: usize, fan_out: usize) -> Matrix {
    let mut rng = Rng::new(derive_seed(seed, name));
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform(-limit, limit))
}

impl Params {
    /// Each tensor draws from its own seed stream, so dropping the severity
    /// head leaves every other tensor bit-identical.
    pub fn init(input_dim: usize, config: &ModelConfig) -> Self {
        let s = config.seed;
        let c = config;
        let severity = c.ablation.has_severity().then(|| SeverityParams {
            hidden_w: glorot(s, "severity_hidden_w", c.gcn2_dim, c.severity_dim),
            hidden_b: Matrix::zeros(1, c.severity_dim),
            out_w: glorot(s, "severity_out_w", c.severity_dim, c.severity_outputs()),
            out_b: Matrix::zeros(1, c.severity_outputs()),
        });
        Self {
            embed_w: glorot(s, "embed_w", input_dim, c.embed_dim),
            embed_b: Matrix::zeros(1, c.embed_dim),
            gcn1_w: glorot(s, "gcn1_w", c.embed_dim, c.gcn1_dim),
            gcn1_b: Matrix::zeros(1, c.gcn1_dim),
            gcn2_w: glorot(s, "gcn2_w", c.gcn1_dim, c.gcn2_dim),
            gcn2_b: Matrix::zeros(1, c.gcn2_dim),
            anomaly_w: glorot(s, "anomaly_w", c.gcn2_dim, 1),
            anomaly_b: Matrix::zeros(1, 1),
            type_w: glorot(s, "type_w", c.gcn2_dim, c.type_classes),
            type_b: Matrix::zeros(1, c.type_classes),
            severity,
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            embed_w: z(&self.embed_w),
            embed_b: z(&self.embed_b),
            gcn1_w: z(&self.gcn1_w),
            gcn1_b: z(&self.gcn1_b),
            gcn2_w: z(&self.gcn2_w),
            gcn2_b: z(&self.gcn2_b),
            anomaly_w: z(&self.anomaly_w),
            anomaly_b: z(&self.anomaly_b),
            type_w: z(&self.type_w),
            type_b: z(&self.type_b),
            severity: self.severity.as_ref().map(|s| SeverityParams {
                hidden_w: z(&s.hidden_w),
                hidden_b: z(&s.hidden_b),
                out_w: z(&s.out_w),
                out_b: z(&s.out_b),
            }),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.embed_w.rows()
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut v = vec![
            ("embed_w", &self.embed_w),
            ("embed_b", &self.embed_b),
            ("gcn1_w", &self.gcn1_w),
            ("gcn1_b", &self.gcn1_b),
            ("gcn2_w", &self.gcn2_w),
            ("gcn2_b", &self.gcn2_b),
            ("anomaly_w", &self.anomaly_w),
            ("anomaly_b", &self.anomaly_b),
            ("type_w", &self.type_w),
            ("type_b", &self.type_b),
        ];
        if let Some(s) = &self.severity {
            v.extend([
                ("severity_hidden_w", &s.hidden_w),
                ("severity_hidden_b", &s.hidden_b),
                ("severity_out_w", &s.out_w),
                ("severity_out_b", &s.out_b),
            ]);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut v = vec![
            ("embed_w", &mut self.embed_w),
            ("embed_b", &mut self.embed_b),
            ("gcn1_w", &mut self.gcn1_w),
            ("gcn1_b", &mut self.gcn1_b),
            ("gcn2_w", &mut self.gcn2_w),
            ("gcn2_b", &mut self.gcn2_b),
            ("anomaly_w", &mut self.anomaly_w),
            ("anomaly_b", &mut self.anomaly_b),
            ("type_w", &mut self.type_w),
            ("type_b", &mut self.type_b),
        ];
        if let Some(s) = &mut self.severity {
            v.extend([
                ("severity_hidden_w", &mut s.hidden_w),
                ("severity_hidden_b", &mut s.hidden_b),
                ("severity_out_w", &mut s.out_w),
                ("severity_out_b", &mut s.out_b),
            ]);
        }
        v
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors_mut().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }

    /// True for tensors that belong to the severity head.
    pub fn is_severity_tensor(name: &str) -> bool {
        name.starts_with("severity_")
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn axpy(&mut self, scale: f64, other: &Params) -> Result<()> {
        let theirs = other.tensors();
        let mut mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::InvalidModelConfig("parameter sets differ in layout".into()));
        }
        for ((_, a), (_, b)) in mine.iter_mut().zip(theirs) {
            a.axpy(scale, b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }
}
