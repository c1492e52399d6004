//! LIME: a weighted ridge-regression surrogate over word-presence vectors.
//!
//! Perturbations keep each word independently with probability 0.5 and
//! replace dropped words by the baseline embedding. Samples are weighted by
//! `exp(-D^2 / sigma^2)` where `D` is the normalized Hamming distance to the
//! all-ones presence vector and `sigma = 0.25`. The surrogate is fit with
//! ridge `lambda = 1e-3` (intercept unpenalized); a singular system retries
//! once with `lambda` increased tenfold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::AttributionTarget;

const KERNEL_SIGMA: f64 = 0.25;
const RIDGE_LAMBDA: f64 = 1e-3;
const KEEP_PROBABILITY: f64 = 0.5;

pub fn lime_scores<T: AttributionTarget + ?Sized>(
    target: &T,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let inputs = target.input_embeddings();
    let n = inputs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut presence: Vec<Vec<f64>> = Vec::with_capacity(samples);
    let mut outputs: Vec<f64> = Vec::with_capacity(samples);
    let mut weights: Vec<f64> = Vec::with_capacity(samples);
    let mut working = inputs.to_vec();
    for _ in 0..samples {
        let mut z = vec![0.0; n];
        let mut dropped = 0usize;
        for j in 0..n {
            if rng.random::<f64>() < KEEP_PROBABILITY {
                z[j] = 1.0;
                working[j] = inputs[j].clone();
            } else {
                dropped += 1;
                working[j] = target.baseline_embedding().to_vec();
            }
        }
        let distance = dropped as f64 / n as f64;
        weights.push((-(distance * distance) / (KERNEL_SIGMA * KERNEL_SIGMA)).exp());
        outputs.push(target.value(&working)?);
        presence.push(z);
    }

    match fit_ridge(&presence, &outputs, &weights, RIDGE_LAMBDA) {
        Some(beta) => Ok(beta),
        None => fit_ridge(&presence, &outputs, &weights, RIDGE_LAMBDA * 10.0).ok_or_else(|| {
            Error::InvalidInput("degenerate LIME design matrix after lambda retry".into())
        }),
    }
}

/// Weighted ridge regression of `y` on `[z, 1]`; returns the word
/// coefficients (intercept dropped), or `None` when the normal equations
/// are singular.
fn fit_ridge(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let n = z.first().map(Vec::len).unwrap_or(0);
    let cols = n + 1;
    let mut a = vec![vec![0.0; cols]; cols];
    let mut b = vec![0.0; cols];
    for ((zi, &yi), &wi) in z.iter().zip(y).zip(w) {
        for r in 0..cols {
            let xr = if r < n { zi[r] } else { 1.0 };
            b[r] += wi * xr * yi;
            for c in 0..cols {
                let xc = if c < n { zi[c] } else { 1.0 };
                a[r][c] += wi * xr * xc;
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate().take(n) {
        row[r] += lambda;
    }
    solve(a, b).map(|mut beta| {
        beta.truncate(n);
        beta
    })
}

/// Gaussian elimination with partial pivoting; `None` on a singular pivot.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .expect("non-empty range");
        if a[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
