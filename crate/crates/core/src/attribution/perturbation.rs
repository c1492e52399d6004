//! Perturbation-based attribution engines: occlusion and Shapley value
//! sampling. Both replace word embeddings by the baseline embedding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::AttributionTarget;

/// `score_j = f(x) - f(x with word j's embedding set to the baseline)`.
pub fn occlusion_scores<T: AttributionTarget + ?Sized>(target: &T) -> Result<Vec<f64>> {
    let inputs = target.input_embeddings();
    let full = target.value(inputs)?;
    let mut scores = Vec::with_capacity(inputs.len());
    let mut working = inputs.to_vec();
    for j in 0..inputs.len() {
        working[j] = target.baseline_embedding().to_vec();
        scores.push(full - target.value(&working)?);
        working[j] = inputs[j].clone();
    }
    Ok(scores)
}

/// Average marginal contributions over explicit permutations, adding words
/// one at a time starting from the all-baseline input. Over any single
/// permutation the contributions telescope to `f(x) - f(baseline)`, so the
/// average satisfies the efficiency identity.
pub fn shapley_from_permutations<T: AttributionTarget + ?Sized>(
    target: &T,
    permutations: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let inputs = target.input_embeddings();
    let n = inputs.len();
    let base_value = target.value(&target.baseline_input())?;
    let mut totals = vec![0.0; n];
    for perm in permutations {
        let mut current = target.baseline_input();
        let mut previous = base_value;
        for &j in perm {
            current[j] = inputs[j].clone();
            let v = target.value(&current)?;
            totals[j] += v - previous;
            previous = v;
        }
    }
    let count = permutations.len() as f64;
    Ok(totals.into_iter().map(|t| t / count).collect())
}

/// Shapley value sampling over `samples` seeded random permutations.
pub fn shapley_scores<T: AttributionTarget + ?Sized>(
    target: &T,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = target.word_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutations = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        permutations.push(perm);
    }
    shapley_from_permutations(target, &permutations)
}
