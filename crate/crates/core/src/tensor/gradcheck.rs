//! Finite-difference gradient checking.

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Analytic derivative at the worst coordinate.
    pub analytic: f64,
    /// Central-difference estimate at the worst coordinate.
    pub numeric: f64,
}

/// Compares `backward` output against (f(x+h*e_i) - f(x-h*e_i)) / 2h per
/// coordinate. Relative error uses a max(1e-12, |analytic|+|numeric|)
/// denominator. Run in f64: central differences are unreliable in f32.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, h: f64) -> Result<GradReport>
where
    T: Element,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument("grad_check step must be > 0".into()));
    }
    let x_var = Tensor::var_from_vec(x.to_vec(), x.shape())?;
    let fx = f(&x_var)?;
    let fx_val = fx.item()?.as_f64();
    if !fx_val.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "grad_check: f(x) is not finite ({fx_val})"
        )));
    }
    let grads = fx.backward()?;
    let analytic: Vec<f64> = match grads.get(&x_var) {
        Some(g) => g.data().iter().map(|v| v.as_f64()).collect(),
        // f does not depend on x
        None => vec![0.0; x.numel()],
    };

    let base = x.to_vec();
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
    };
    let mut first = true;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = plus[i] + T::from_f64(h);
        let mut minus = base.clone();
        minus[i] = minus[i] - T::from_f64(h);
        let fp = f(&Tensor::from_vec(plus, x.shape())?)?.item()?.as_f64();
        let fm = f(&Tensor::from_vec(minus, x.shape())?)?.item()?.as_f64();
        let numeric = (fp - fm) / (2.0 * h);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-12);
        let rel = (analytic[i] - numeric).abs() / denom;
        if first || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
            first = false;
        }
    }
    Ok(report)
}
