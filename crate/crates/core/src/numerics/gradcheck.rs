use super::Matrix;
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function of a matrix.
///
/// Entry `(i, j)` is `(f(x + h·e_ij) − f(x − h·e_ij)) / 2h`.
pub fn finite_diff_grad(f: impl Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidModelConfig(format!("finite-difference step {h} must be positive")));
    }
    if !f(x).is_finite() {
        return Err(Error::NonFinite("finite-difference base point"));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for idx in 0..x.data().len() {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[idx] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        grad.data_mut()[idx] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Largest elementwise relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
