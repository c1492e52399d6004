//! Erasure-based faithfulness: comprehensiveness, sufficiency, and their
//! AOPC variants over bins of top-attributed tokens.
//!
//! Token removal deletes words from the sequence and re-inserts the special
//! tokens, deliberately producing the out-of-distribution inputs this style
//! of evaluation is known for. The tracked class is the originally
//! predicted one.

use crate::data::TokenizedPair;
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams, PAD};
use crate::util::{argmax_tie_lowest, pairwise_mean};

/// Bin fractions for the AOPC curves; strictly increasing within (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureConfig {
    pub bin_fractions: Vec<f64>,
}

impl Default for ErasureConfig {
    fn default() -> Self {
        ErasureConfig {
            bin_fractions: vec![0.01, 0.05, 0.10, 0.20, 0.50],
        }
    }
}

impl ErasureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_fractions.is_empty() {
            return Err(Error::InvalidConfig("bin fractions are empty".into()));
        }
        let mut previous = 0.0;
        for &f in &self.bin_fractions {
            if f <= previous || f > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "bin fractions must be strictly increasing in (0, 1]: {:?}",
                    self.bin_fractions
                )));
            }
            previous = f;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErasureKind {
    Comprehensiveness,
    Sufficiency,
}

/// Class-probability oracle over tokenized pairs. Implemented by the
/// built-in classifier; test models implement it directly to provide
/// closed-form contributions.
pub trait ProbModel {
    fn probabilities(&self, pair: &TokenizedPair) -> Result<Vec<f64>>;
}

impl ProbModel for ModelParams {
    fn probabilities(&self, pair: &TokenizedPair) -> Result<Vec<f64>> {
        Ok(forward(self, pair)?.probabilities)
    }
}

/// Indices of the `ceil(fraction * n)` highest-scoring words, ties broken by
/// the lower index. Returned sorted ascending.
pub fn top_k_tokens(scores: &[f64], fraction: f64) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty score vector".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let k = (fraction * scores.len() as f64).ceil() as usize;
    let k = k.min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(k).collect();
    top.sort_unstable();
    Ok(top)
}

/// Rebuilds a pair keeping only the word positions selected by `keep`;
/// an emptied segment is replaced by a single `[PAD]` word.
fn rebuild_pair(pair: &TokenizedPair, keep: impl Fn(usize) -> bool) -> TokenizedPair {
    let mut premise = Vec::new();
    let mut hypothesis = Vec::new();
    for (pos, word) in pair.words().enumerate() {
        if keep(pos) {
            if pos < pair.premise_len() {
                premise.push(word.to_string());
            } else {
                hypothesis.push(word.to_string());
            }
        }
    }
    if premise.is_empty() {
        premise.push(PAD.to_string());
    }
    if hypothesis.is_empty() {
        hypothesis.push(PAD.to_string());
    }
    TokenizedPair::new(
        pair.id.clone(),
        pair.language.clone(),
        premise,
        hypothesis,
        pair.label,
    )
    .expect("segments are non-empty")
}

fn validate_indices(pair: &TokenizedPair, indices: &[usize]) -> Result<()> {
    for &i in indices {
        if i >= pair.word_count() {
            return Err(Error::InvalidInput(format!(
                "token index {i} out of range for {} words",
                pair.word_count()
            )));
        }
    }
    Ok(())
}

/// Drop in the originally predicted class probability after removing the
/// words at `removed`.
pub fn comprehensiveness<M: ProbModel>(
    model: &M,
    pair: &TokenizedPair,
    removed: &[usize],
) -> Result<f64> {
    validate_indices(pair, removed)?;
    let original = model.probabilities(pair)?;
    let class = argmax_tie_lowest(&original);
    let reduced = rebuild_pair(pair, |pos| !removed.contains(&pos));
    let after = model.probabilities(&reduced)?;
    Ok(original[class] - after[class])
}

/// Drop in the originally predicted class probability when only the words
/// at `kept` remain.
pub fn sufficiency<M: ProbModel>(model: &M, pair: &TokenizedPair, kept: &[usize]) -> Result<f64> {
    validate_indices(pair, kept)?;
    let original = model.probabilities(pair)?;
    let class = argmax_tie_lowest(&original);
    let reduced = rebuild_pair(pair, |pos| kept.contains(&pos));
    let after = model.probabilities(&reduced)?;
    Ok(original[class] - after[class])
}

/// Mean of the erasure metric over the config's top-fraction bins.
pub fn aopc<M: ProbModel>(
    model: &M,
    pair: &TokenizedPair,
    scores: &[f64],
    config: &ErasureConfig,
    kind: ErasureKind,
) -> Result<f64> {
    config.validate()?;
    if scores.len() != pair.word_count() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} words",
            scores.len(),
            pair.word_count()
        )));
    }
    let mut values = Vec::with_capacity(config.bin_fractions.len());
    for &fraction in &config.bin_fractions {
        let bin = top_k_tokens(scores, fraction)?;
        let value = match kind {
            ErasureKind::Comprehensiveness => comprehensiveness(model, pair, &bin)?,
            ErasureKind::Sufficiency => sufficiency(model, pair, &bin)?,
        };
        values.push(value);
    }
    Ok(pairwise_mean(&values))
}
