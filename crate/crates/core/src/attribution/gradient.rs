//! Gradient-based attribution engines.

use crate::error::Result;
use crate::model::GradMode;

use super::AttributionTarget;

/// Per-dimension absolute gradient at the input.
pub fn saliency_per_dim<T: AttributionTarget + ?Sized>(target: &T) -> Result<Vec<Vec<f64>>> {
    let grads = target.gradient(target.input_embeddings(), GradMode::Plain)?;
    Ok(grads
        .into_iter()
        .map(|row| row.into_iter().map(f64::abs).collect())
        .collect())
}

/// Per-dimension gradient times input.
pub fn input_x_gradient_per_dim<T: AttributionTarget + ?Sized>(target: &T) -> Result<Vec<Vec<f64>>> {
    let grads = target.gradient(target.input_embeddings(), GradMode::Plain)?;
    Ok(grads
        .into_iter()
        .zip(target.input_embeddings())
        .map(|(g, u)| g.into_iter().zip(u).map(|(gv, uv)| gv * uv).collect())
        .collect())
}

/// Per-dimension signed gradient under the guided ReLU override. No
/// absolute value is taken: that is saliency-specific.
pub fn guided_backprop_per_dim<T: AttributionTarget + ?Sized>(target: &T) -> Result<Vec<Vec<f64>>> {
    target.gradient(target.input_embeddings(), GradMode::Guided)
}

/// Per-dimension integrated gradients with an `m`-step Riemann sum along
/// the straight path from the baseline:
/// `(u - u0) * (1/m) * sum_{l=1..m} grad f(u0 + (l/m)(u - u0))`.
pub fn integrated_gradients_per_dim<T: AttributionTarget + ?Sized>(
    target: &T,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let inputs = target.input_embeddings();
    let baseline = target.baseline_embedding();
    let n = inputs.len();
    let d = target.embedding_dim();

    let mut grad_sum = vec![vec![0.0; d]; n];
    let mut point = vec![vec![0.0; d]; n];
    for l in 1..=steps {
        let alpha = l as f64 / steps as f64;
        for (p, u) in point.iter_mut().zip(inputs) {
            for k in 0..d {
                p[k] = baseline[k] + alpha * (u[k] - baseline[k]);
            }
        }
        let g = target.gradient(&point, GradMode::Plain)?;
        for (acc, row) in grad_sum.iter_mut().zip(&g) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }

    let scale = 1.0 / steps as f64;
    Ok(inputs
        .iter()
        .zip(&grad_sum)
        .map(|(u, acc)| {
            (0..d)
                .map(|k| (u[k] - baseline[k]) * acc[k] * scale)
                .collect()
        })
        .collect())
}
