use super::network::{forward, loss_and_gradients};
use super::params::Params;
use super::ModelConfig;
use crate::graph::SignalGraph;
use crate::numerics::{finite_diff_grad, max_relative_error, Matrix, DEFAULT_STEP};
use crate::{Error, Result};

/// Worst relative disagreement between one analytic gradient tensor and its
/// central finite-difference estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub max_relative_error: f64,
}

/// Compares every analytic parameter gradient with central differences of
/// the objective it actually descends. With a detached severity head the
/// shared layers see `λ_a·L_a + λ_t·L_t` and the severity head sees
/// `λ_s·L_s`; otherwise every tensor sees the total loss.
pub fn gradient_check(
    graph: &SignalGraph,
    params: &Params,
    config: &ModelConfig,
    dropout: Option<&Matrix>,
    floor: f64,
) -> Result<Vec<TensorCheck>> {
    let fwd = forward(graph, params, config, dropout)?;
    let (_, grads) = loss_and_gradients(&fwd, graph, params, config)?;
    let mut out = Vec::new();
    for (name, analytic) in grads.tensors() {
        let severity_only = Params::is_severity_tensor(name);
        let objective = |p: &Params| -> f64 {
            let Ok(f) = forward(graph, p, config, dropout) else { return f64::NAN };
            let Ok((l, _)) = loss_and_gradients(&f, graph, p, config) else { return f64::NAN };
            if !config.detach_severity {
                l.total
            } else if severity_only {
                config.lambda_severity * l.severity
            } else {
                config.lambda_anomaly * l.anomaly + config.lambda_type * l.type_ce
            }
        };
        let base = params.tensors().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m.clone());
        let base = base.ok_or(Error::InvalidModelConfig(format!("unknown tensor {name}")))?;
        let numeric = finite_diff_grad(
            |m| {
                let mut p = params.clone();
                if let Some(t) = p.tensor_mut(name) {
                    *t = m.clone();
                }
                objective(&p)
            },
            &base,
            DEFAULT_STEP,
        )?;
        out.push(TensorCheck {
            name,
            max_relative_error: max_relative_error(analytic, &numeric, floor),
        });
    }
    Ok(out)
}
