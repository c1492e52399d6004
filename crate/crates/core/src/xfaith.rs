//! Cross-lingual faithfulness: attribution-score projection along word
//! alignments, Spearman correlation with average-rank ties, per-language and
//! overall averages, and the random-alignment ablation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{AlignmentSet, AttributionVector, EvalReport};
use crate::error::{Error, Result, UndefinedReason};
use crate::util::pairwise_mean;

/// Source-side scores paired with alignment-projected target-side scores.
/// Source words without any alignment are dropped from both vectors;
/// `coverage` records the retained fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedScores {
    pub instance_id: String,
    pub source: Vec<f64>,
    pub aligned: Vec<f64>,
    pub coverage: f64,
}

/// Projects target-language scores onto the source side: the aligned score
/// of source word `k` is the sum of the scores of all target words linked
/// to it.
pub fn project_scores(
    src: &AttributionVector,
    tgt: &AttributionVector,
    align: &AlignmentSet,
) -> Result<ProjectedScores> {
    if src.instance_id != tgt.instance_id || src.instance_id != align.instance_id {
        return Err(Error::InvalidInput(format!(
            "mismatched instance ids: {} / {} / {}",
            src.instance_id, tgt.instance_id, align.instance_id
        )));
    }
    align.validate_lengths(src.scores.len(), tgt.scores.len())?;

    let mut sums: Vec<Option<f64>> = vec![None; src.scores.len()];
    for &(k, j) in &align.pairs {
        *sums[k].get_or_insert(0.0) += tgt.scores[j];
    }
    let mut source = Vec::new();
    let mut aligned = Vec::new();
    for (k, sum) in sums.iter().enumerate() {
        if let Some(s) = sum {
            source.push(src.scores[k]);
            aligned.push(*s);
        }
    }
    let coverage = if src.scores.is_empty() {
        0.0
    } else {
        source.len() as f64 / src.scores.len() as f64
    };
    Ok(ProjectedScores {
        instance_id: src.instance_id.clone(),
        source,
        aligned,
        coverage,
    })
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank mean of (i+1)..=(j+1).
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Undefined(UndefinedReason::TooShort));
    }
    let mean_a = pairwise_mean(a);
    let mean_b = pairwise_mean(b);
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::Undefined(UndefinedReason::ConstantScores));
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average-rank tie handling: the Pearson
/// correlation of the rank vectors. Undefined (skip signal) for fewer than
/// two values or a constant vector.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Undefined(UndefinedReason::TooShort));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Pearson correlation plus a two-sided p-value from the t approximation
/// with n - 2 degrees of freedom. Used to relate per-language accuracy to
/// per-language faithfulness.
pub fn pearson_with_p(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let r = pearson(a, b)?;
    let n = a.len() as f64;
    if n < 3.0 {
        return Err(Error::Undefined(UndefinedReason::TooShort));
    }
    if (1.0 - r * r) <= f64::EPSILON {
        return Ok((r, 0.0));
    }
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((r, p.clamp(0.0, 1.0)))
}

/// Inputs for [`crosslingual_faithfulness`], all keyed by instance id.
pub type ScoresByInstance = BTreeMap<String, AttributionVector>;
/// Keyed by target language, then instance id.
pub type ScoresByLanguage = BTreeMap<String, ScoresByInstance>;
pub type AlignmentsByLanguage = BTreeMap<String, BTreeMap<String, AlignmentSet>>;

/// Per-instance Spearman correlations between source scores and projected
/// target scores, averaged per language and then across languages.
///
/// Instances whose correlation is undefined (constant vector, fewer than
/// two retained words) are skipped and counted. A target language with no
/// valid instance is excluded from the overall average and flagged.
pub fn crosslingual_faithfulness(
    source_scores: &ScoresByInstance,
    target_scores: &ScoresByLanguage,
    alignments: &AlignmentsByLanguage,
) -> Result<EvalReport> {
    let mut report = EvalReport::new();
    let mut skipped = 0usize;
    let mut coverages = Vec::new();
    let mut language_means = Vec::new();
    let mut undefined_languages = Vec::new();

    for (language, by_instance) in target_scores {
        let lang_alignments = alignments.get(language).ok_or_else(|| {
            Error::InvalidInput(format!("no alignments for language {language}"))
        })?;
        let mut correlations = Vec::new();
        for (id, tgt) in by_instance {
            let src = source_scores.get(id).ok_or_else(|| {
                Error::InvalidInput(format!("no source scores for instance {id}"))
            })?;
            let align = lang_alignments.get(id).ok_or_else(|| {
                Error::InvalidInput(format!("no alignment for {language}/{id}"))
            })?;
            let projected = project_scores(src, tgt, align)?;
            coverages.push(projected.coverage);
            match spearman(&projected.source, &projected.aligned) {
                Ok(r) => {
                    report.per_instance.insert(format!("{language}:{id}"), r);
                    correlations.push(r);
                }
                Err(e) if e.is_undefined() => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if correlations.is_empty() {
            undefined_languages.push(language.clone());
        } else {
            let mean = pairwise_mean(&correlations);
            report.per_language.insert(language.clone(), mean);
            language_means.push(mean);
        }
    }

    if language_means.is_empty() {
        return Err(Error::InsufficientData(
            "no language produced a defined correlation".into(),
        ));
    }
    report
        .metrics
        .insert("rho_overall".into(), pairwise_mean(&language_means));
    report.metrics.insert("skipped_count".into(), skipped as f64);
    report.metrics.insert(
        "mean_coverage".into(),
        if coverages.is_empty() {
            0.0
        } else {
            pairwise_mean(&coverages)
        },
    );
    report.metrics.insert(
        "undefined_language_count".into(),
        undefined_languages.len() as f64,
    );
    report.set_config("languages", target_scores.keys().cloned().collect::<Vec<_>>());
    report.set_config("instances", source_scores.len());
    report.set_config("per_language_metric", "rho");
    if !undefined_languages.is_empty() {
        report.set_config("undefined_languages", undefined_languages);
    }
    Ok(report)
}

/// Random alignments via two rounds of mutual argmax over a uniform random
/// similarity matrix, zeroing the rows and columns of selected pairs between
/// rounds. Candidate pairs require strictly positive similarity, so zeroed
/// rows and columns cannot re-enter.
pub fn random_alignments(src_len: usize, tgt_len: usize, seed: u64) -> AlignmentSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = vec![vec![0.0f64; tgt_len]; src_len];
    for row in &mut sim {
        for v in row.iter_mut() {
            *v = rng.random::<f64>();
        }
    }
    let mut pairs = Vec::new();
    for _ in 0..2 {
        let mut row_argmax = vec![None; src_len];
        for (k, row) in sim.iter().enumerate() {
            let mut best: Option<usize> = None;
            for (j, v) in row.iter().enumerate() {
                if *v > 0.0 && best.map_or(true, |b| *v > row[b]) {
                    best = Some(j);
                }
            }
            row_argmax[k] = best;
        }
        let mut col_argmax = vec![None; tgt_len];
        for j in 0..tgt_len {
            let mut best: Option<usize> = None;
            for (k, row) in sim.iter().enumerate() {
                if row[j] > 0.0 && best.map_or(true, |b: usize| row[j] > sim[b][j]) {
                    best = Some(k);
                }
            }
            col_argmax[j] = best;
        }
        let mut added = Vec::new();
        for (k, j) in row_argmax.iter().enumerate().filter_map(|(k, j)| j.map(|j| (k, j))) {
            if col_argmax[j] == Some(k) {
                added.push((k, j));
            }
        }
        for &(k, j) in &added {
            for v in sim[k].iter_mut() {
                *v = 0.0;
            }
            for row in sim.iter_mut() {
                row[j] = 0.0;
            }
        }
        pairs.extend(added);
    }
    AlignmentSet::new("", "", "", pairs)
}
