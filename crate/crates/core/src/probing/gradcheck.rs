use ndarray::{ArrayView1, Axis};

use super::network::ProbingNetwork;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over parameters of `|a − f| / max(|a|, |f|, 1e-12)`.
    pub max_relative_error: f64,
    /// Backprop gradient, flattened in serialization order.
    pub analytic: Vec<f64>,
    /// Central-difference estimate in the same order.
    pub numeric: Vec<f64>,
}

/// Compares backprop against central finite differences of the single-sample
/// loss for every parameter.
pub fn grad_check(
    net: &ProbingNetwork,
    e0: ArrayView1<'_, f64>,
    label: usize,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let x = e0.insert_axis(Axis(0));
    let labels = [label];
    let (_, grads, _) = net.loss_and_gradients(x, &labels)?;
    let analytic: Vec<f64> = grads.groups().flatten().copied().collect();

    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    let sizes: Vec<usize> = net.param_groups().map(<[f64]>::len).collect();
    for (g, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let original = probe.param_groups_mut()[g][i];
            probe.param_groups_mut()[g][i] = original + epsilon;
            let plus = probe.loss(x, &labels)?;
            probe.param_groups_mut()[g][i] = original - epsilon;
            let minus = probe.loss(x, &labels)?;
            probe.param_groups_mut()[g][i] = original;
            numeric.push((plus - minus) / (2.0 * epsilon));
        }
    }

    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-12))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        analytic,
        numeric,
    })
}
