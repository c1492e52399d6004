//! Plausibility against gold highlights: average precision and MAP,
//! threshold binarization and search, highlight projection along word
//! alignments, P/R/F1 validation, and the multilingual highlighted-dataset
//! builder.

use std::collections::BTreeMap;

use crate::data::{
    AlignmentSet, AttributionVector, DatasetEntry, EvalReport, HighlightMask,
};
use crate::error::{Error, Result, UndefinedReason};
use crate::util::pairwise_mean;
use crate::xfaith::{ScoresByInstance, ScoresByLanguage};

/// Result of a grid search for the binarization threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearchResult {
    pub threshold: f64,
    pub f1_at_threshold: f64,
    pub grid: Vec<ThresholdPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Average precision of ranking `scores` against a binary gold mask: the
/// recall-change-weighted mean of prefix precisions, ranking ties broken by
/// the lower index. Undefined (skip signal) when the mask has no positive.
pub fn average_precision(scores: &[f64], gold: &HighlightMask) -> Result<f64> {
    if scores.len() != gold.mask.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} gold positions",
            scores.len(),
            gold.mask.len()
        )));
    }
    let total_gold = gold.positive_count();
    if total_gold == 0 {
        return Err(Error::Undefined(UndefinedReason::NoGoldPositives));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if gold.mask[idx] {
            hits += 1;
            let precision = hits as f64 / (rank0 + 1) as f64;
            // Recall change is 1/total_gold at each hit.
            ap += precision / total_gold as f64;
        }
    }
    Ok(ap)
}

/// Mean average precision over the instances shared by both maps. Instances
/// with no gold positives are skipped and counted.
pub fn map_score(
    attributions: &ScoresByInstance,
    golds: &BTreeMap<String, HighlightMask>,
) -> Result<EvalReport> {
    let mut aps = Vec::new();
    let mut skipped = 0usize;
    let mut report = EvalReport::new();
    let mut matched = 0usize;
    for (id, vector) in attributions {
        let Some(gold) = golds.get(id) else { continue };
        matched += 1;
        match average_precision(&vector.scores, gold) {
            Ok(ap) => {
                report.per_instance.insert(id.clone(), ap);
                aps.push(ap);
            }
            Err(e) if e.is_undefined() => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if matched == 0 {
        return Err(Error::InsufficientData(
            "no instance ids shared between attributions and highlights".into(),
        ));
    }
    if aps.is_empty() {
        return Err(Error::InsufficientData(
            "every shared instance was skipped".into(),
        ));
    }
    report.metrics.insert("map".into(), pairwise_mean(&aps));
    report.metrics.insert("skipped_count".into(), skipped as f64);
    report.set_config("instances", matched);
    Ok(report)
}

/// Binarizes scores after per-instance max-normalization: position `j` is
/// true iff `score_j / max >= threshold`. A vector with no positive score
/// maps to all-false.
pub fn binarize(scores: &[f64], threshold: f64) -> Vec<bool> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return vec![false; scores.len()];
    }
    scores.iter().map(|s| s / max >= threshold).collect()
}

/// Evenly spaced thresholds 0.000, 0.001, ..., 1.000.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=1000).map(|i| i as f64 / 1000.0).collect()
}

/// Micro-averaged precision/recall/F1 of the binarized scores over all word
/// positions of all shared instances, maximized over the threshold grid
/// (lowest threshold wins ties). Errors when the highlights contain no
/// positive position at all.
pub fn best_f1_threshold(
    attributions: &ScoresByInstance,
    golds: &BTreeMap<String, HighlightMask>,
    grid: &[f64],
) -> Result<ThresholdSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    let shared: Vec<(&AttributionVector, &HighlightMask)> = attributions
        .iter()
        .filter_map(|(id, v)| golds.get(id).map(|g| (v, g)))
        .collect();
    if shared.is_empty() {
        return Err(Error::InsufficientData(
            "no instance ids shared between attributions and highlights".into(),
        ));
    }
    for (v, g) in &shared {
        if v.scores.len() != g.mask.len() {
            return Err(Error::InvalidInput(format!(
                "instance {}: {} scores for {} gold positions",
                v.instance_id,
                v.scores.len(),
                g.mask.len()
            )));
        }
    }
    if shared.iter().all(|(_, g)| g.positive_count() == 0) {
        return Err(Error::Undefined(UndefinedReason::NoGoldPositives));
    }

    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<ThresholdPoint> = None;
    for &threshold in grid {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (v, g) in &shared {
            let predicted = binarize(&v.scores, threshold);
            for (p, r) in predicted.iter().zip(&g.mask) {
                match (p, r) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let point = ThresholdPoint {
            threshold,
            precision,
            recall,
            f1,
        };
        if best.as_ref().map_or(true, |b| point.f1 > b.f1) {
            best = Some(point.clone());
        }
        points.push(point);
    }
    let best = best.expect("grid is non-empty");
    Ok(ThresholdSearchResult {
        threshold: best.threshold,
        f1_at_threshold: best.f1,
        grid: points,
    })
}

/// Projects a source-language highlight along an alignment: a target word is
/// true iff it is aligned to at least one true source word.
pub fn project_highlights(
    src: &HighlightMask,
    align: &AlignmentSet,
    target_len: usize,
) -> Result<HighlightMask> {
    align.validate_lengths(src.mask.len(), target_len)?;
    let mut mask = vec![false; target_len];
    for &(k, j) in &align.pairs {
        if src.mask[k] {
            mask[j] = true;
        }
    }
    Ok(HighlightMask::new(
        src.instance_id.clone(),
        align.target_language.clone(),
        mask,
    ))
}

/// Word-level precision, recall, and F1 between two masks. Zero-denominator
/// conventions: precision 0 without predicted positives, recall 0 without
/// reference positives, F1 0 when precision + recall is 0.
pub fn highlight_prf(predicted: &[bool], reference: &[bool]) -> Result<(f64, f64, f64)> {
    if predicted.len() != reference.len() {
        return Err(Error::InvalidInput(format!(
            "mask length mismatch: {} vs {}",
            predicted.len(),
            reference.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, r) in predicted.iter().zip(reference) {
        match (p, r) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((precision, recall, f1))
}

/// Output of the multilingual highlighted-dataset builder.
#[derive(Debug, Clone)]
pub struct ExnliOutput {
    /// Language -> entries with (projected) highlights attached.
    pub datasets: BTreeMap<String, Vec<DatasetEntry>>,
    /// Per-language MAP of target-language attributions against the
    /// projected highlights, plus omission counts.
    pub report: EvalReport,
    /// Language -> instance ids omitted for missing alignments.
    pub omitted: BTreeMap<String, Vec<String>>,
}

/// Builds highlighted datasets: binarizes the source-language attribution
/// scores at `threshold`, attaches them as source highlights, and projects
/// them along the alignments into every target language. Instances without
/// an alignment in some language are omitted there and recorded. When
/// target-language attributions are supplied, a per-language MAP
/// self-consistency score is reported.
pub fn build_exnli(
    source_language: &str,
    entries: &[DatasetEntry],
    source_attributions: &ScoresByInstance,
    target_attributions: &ScoresByLanguage,
    alignments: &crate::xfaith::AlignmentsByLanguage,
    threshold: f64,
) -> Result<ExnliOutput> {
    let mut by_language: BTreeMap<String, Vec<&DatasetEntry>> = BTreeMap::new();
    for entry in entries {
        by_language
            .entry(entry.pair.language.clone())
            .or_default()
            .push(entry);
    }
    let source_entries = by_language.remove(source_language).ok_or_else(|| {
        Error::InvalidInput(format!(
            "no instances for source language {source_language}"
        ))
    })?;

    // Source side: binarized attribution scores become the highlights.
    let mut source_highlights: BTreeMap<String, HighlightMask> = BTreeMap::new();
    let mut source_out = Vec::new();
    for entry in &source_entries {
        let id = &entry.pair.id;
        let vector = source_attributions.get(id).ok_or_else(|| {
            Error::InvalidInput(format!("no source attribution for instance {id}"))
        })?;
        vector.validate_against(&entry.pair)?;
        let mask = HighlightMask::new(
            id.clone(),
            source_language.to_string(),
            binarize(&vector.scores, threshold),
        );
        source_highlights.insert(id.clone(), mask.clone());
        source_out.push(DatasetEntry {
            pair: entry.pair.clone(),
            highlight: Some(mask),
        });
    }

    let mut datasets = BTreeMap::new();
    let mut omitted: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut projected_by_language: BTreeMap<String, BTreeMap<String, HighlightMask>> =
        BTreeMap::new();
    datasets.insert(source_language.to_string(), source_out);

    for (language, lang_entries) in &by_language {
        let lang_alignments = alignments.get(language);
        let mut out = Vec::new();
        let mut projected_masks = BTreeMap::new();
        for entry in lang_entries {
            let id = &entry.pair.id;
            let (Some(align), Some(src_mask)) = (
                lang_alignments.and_then(|m| m.get(id)),
                source_highlights.get(id),
            ) else {
                omitted.entry(language.clone()).or_default().push(id.clone());
                continue;
            };
            let mask = project_highlights(src_mask, align, entry.pair.word_count())?;
            projected_masks.insert(id.clone(), mask.clone());
            out.push(DatasetEntry {
                pair: entry.pair.clone(),
                highlight: Some(mask),
            });
        }
        projected_by_language.insert(language.clone(), projected_masks);
        datasets.insert(language.clone(), out);
    }

    // Self-consistency: MAP of each language's attributions against the
    // highlights the dataset now carries.
    let mut report = EvalReport::new();
    let mut total_skipped = 0.0;
    if let Ok(source_map) = map_score(source_attributions, &source_highlights) {
        report
            .per_language
            .insert(source_language.to_string(), source_map.metrics["map"]);
        total_skipped += source_map.metrics["skipped_count"];
    }
    for (language, masks) in &projected_by_language {
        if let Some(vectors) = target_attributions.get(language) {
            if masks.is_empty() {
                continue;
            }
            match map_score(vectors, masks) {
                Ok(lang_map) => {
                    report
                        .per_language
                        .insert(language.clone(), lang_map.metrics["map"]);
                    total_skipped += lang_map.metrics["skipped_count"];
                }
                Err(e) if matches!(e, Error::InsufficientData(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let omitted_total: usize = omitted.values().map(Vec::len).sum();
    report.metrics.insert("omitted_total".into(), omitted_total as f64);
    report.metrics.insert("skipped_count".into(), total_skipped);
    report.set_config("source_language", source_language);
    report.set_config("threshold", threshold);
    report.set_config("per_language_metric", "map");
    report.set_config("instances", source_highlights.len());

    Ok(ExnliOutput {
        datasets,
        report,
        omitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Aggregation, Method, OutputMechanism};

    fn gold(id: &str, mask: &[bool]) -> HighlightMask {
        HighlightMask::new(id, "en", mask.to_vec())
    }

    fn vector(id: &str, lang: &str, scores: Vec<f64>) -> AttributionVector {
        AttributionVector {
            instance_id: id.into(),
            language: lang.into(),
            method: Method::Occlusion,
            output_mechanism: OutputMechanism::Loss,
            aggregation: Aggregation::None,
            scores,
        }
    }

    #[test]
    fn average_precision_examples() {
        // All gold ranked first.
        let ap = average_precision(&[0.9, 0.1, 0.8], &gold("e", &[true, false, true])).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);
        // Prefix-enumeration oracle value 7/12.
        let ap = average_precision(&[0.9, 0.8, 0.1], &gold("e", &[false, true, true])).unwrap();
        assert!((ap - 7.0 / 12.0).abs() < 1e-12);
        // Single gold word.
        let ap = average_precision(&[0.5], &gold("e", &[true])).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);
        // No gold positives: skip signal.
        assert!(matches!(
            average_precision(&[0.5, 0.4], &gold("e", &[false, false])),
            Err(Error::Undefined(UndefinedReason::NoGoldPositives))
        ));
        assert!(average_precision(&[0.5], &gold("e", &[true, false])).is_err());
    }

    #[test]
    fn average_precision_invariant_under_monotone_transform() {
        let scores = [0.3, 0.9, 0.1, 0.5];
        let mask = gold("e", &[true, false, false, true]);
        let a = average_precision(&scores, &mask).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 4.0).exp() + 1.0).collect();
        let b = average_precision(&transformed, &mask).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn map_examples() {
        let mut attributions = BTreeMap::new();
        attributions.insert("a".to_string(), vector("a", "en", vec![0.9, 0.1]));
        attributions.insert("b".to_string(), vector("b", "en", vec![0.1, 0.9]));
        let mut golds = BTreeMap::new();
        golds.insert("a".to_string(), gold("a", &[true, false]));
        golds.insert("b".to_string(), gold("b", &[true, false]));
        let report = map_score(&attributions, &golds).unwrap();
        // AP(a) = 1.0, AP(b) = 0.5 -> MAP 0.75.
        assert!((report.metrics["map"] - 0.75).abs() < 1e-12);

        let empty: BTreeMap<String, HighlightMask> = BTreeMap::new();
        assert!(map_score(&attributions, &empty).is_err());
    }

    #[test]
    fn binarize_examples() {
        // Normalized [1.0, 0.2, 0.6] at the 0.167 threshold: all true.
        assert_eq!(binarize(&[0.5, 0.1, 0.3], 0.167), vec![true, true, true]);
        assert_eq!(binarize(&[0.5, 0.1, 0.3], 0.0), vec![true, true, true]);
        assert_eq!(binarize(&[0.5, 0.1, 0.3], 1.1), vec![false, false, false]);
        assert_eq!(binarize(&[0.0, 0.0], 0.5), vec![false, false]);
        // Raising the threshold never adds a true position.
        let scores = [0.9, 0.4, 0.2, 0.7];
        let mut previous = binarize(&scores, 0.0);
        for t in [0.2, 0.4, 0.6, 0.8, 1.0] {
            let current = binarize(&scores, t);
            for (c, p) in current.iter().zip(&previous) {
                assert!(!c | p, "threshold increase added a positive");
            }
            previous = current;
        }
    }

    #[test]
    fn best_threshold_recovers_planted_binarization() {
        let mut attributions = BTreeMap::new();
        let mut golds = BTreeMap::new();
        for (i, scores) in [vec![1.0, 0.6, 0.2], vec![0.9, 0.45, 0.3], vec![0.8, 0.5, 0.1]]
            .into_iter()
            .enumerate()
        {
            let id = format!("i{i}");
            golds.insert(id.clone(), gold(&id, &binarize(&scores, 0.5)));
            attributions.insert(id.clone(), vector(&id, "en", scores));
        }
        let result =
            best_f1_threshold(&attributions, &golds, &default_threshold_grid()).unwrap();
        assert!((result.f1_at_threshold - 1.0).abs() < 1e-12);
        let predicted_ok = attributions.iter().all(|(id, v)| {
            binarize(&v.scores, result.threshold) == golds[id].mask
        });
        assert!(predicted_ok);
        assert_eq!(result.grid.len(), 1001);
    }

    #[test]
    fn best_threshold_requires_gold_positives() {
        let mut attributions = BTreeMap::new();
        attributions.insert("a".to_string(), vector("a", "en", vec![0.5, 0.1]));
        let mut golds = BTreeMap::new();
        golds.insert("a".to_string(), gold("a", &[false, false]));
        assert!(matches!(
            best_f1_threshold(&attributions, &golds, &default_threshold_grid()),
            Err(Error::Undefined(UndefinedReason::NoGoldPositives))
        ));
    }

    #[test]
    fn projection_examples() {
        let src = gold("e", &[true, false]);
        let identity = AlignmentSet::new("e", "en", "de", vec![(0, 0), (1, 1)]);
        let projected = project_highlights(&src, &identity, 2).unwrap();
        assert_eq!(projected.mask, vec![true, false]);

        // One-to-many: both target words turn true.
        let split = AlignmentSet::new("e", "en", "de", vec![(0, 0), (0, 1), (1, 2)]);
        let projected = project_highlights(&src, &split, 3).unwrap();
        assert_eq!(projected.mask, vec![true, true, false]);

        let empty = AlignmentSet::new("e", "en", "de", Vec::<(usize, usize)>::new());
        let projected = project_highlights(&src, &empty, 3).unwrap();
        assert_eq!(projected.mask, vec![false, false, false]);

        // Adding alignment pairs never removes a true target position.
        let mut grown = split.clone();
        grown.pairs.insert((1, 1));
        let with_more = project_highlights(&src, &grown, 3).unwrap();
        for (a, b) in projected.mask.iter().zip(&with_more.mask) {
            assert!(!a | b);
        }
    }

    #[test]
    fn prf_examples() {
        assert_eq!(
            highlight_prf(&[true, true, false], &[true, true, false]).unwrap(),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(
            highlight_prf(&[true, false], &[false, true]).unwrap(),
            (0.0, 0.0, 0.0)
        );
        // Predicted {0,1}, reference {1,2}: one of two predicted correct,
        // one of two referenced found.
        let (p, r, f1) =
            highlight_prf(&[true, true, false], &[false, true, true]).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((r - 0.5).abs() < 1e-12);
        assert!((f1 - 0.5).abs() < 1e-12);
        assert!(highlight_prf(&[true], &[true, false]).is_err());
    }

    #[test]
    fn exnli_single_language_is_binarized_input() {
        let corpus = crate::corpus::generate(31, 6, 2, 0.67).unwrap();
        let base = corpus.base_language().to_string();
        let entries: Vec<DatasetEntry> = corpus
            .entries()
            .filter(|e| e.pair.language == base)
            .cloned()
            .collect();
        let mut source_attr = BTreeMap::new();
        for e in &entries {
            let scores: Vec<f64> = e
                .highlight
                .as_ref()
                .unwrap()
                .mask
                .iter()
                .map(|b| if *b { 1.0 } else { 0.0 })
                .collect();
            source_attr.insert(e.pair.id.clone(), vector(&e.pair.id, &base, scores));
        }
        let out = build_exnli(
            &base,
            &entries,
            &source_attr,
            &BTreeMap::new(),
            &BTreeMap::new(),
            0.5,
        )
        .unwrap();
        assert_eq!(out.datasets.len(), 1);
        for entry in &out.datasets[&base] {
            let expected = binarize(&source_attr[&entry.pair.id].scores, 0.5);
            assert_eq!(entry.highlight.as_ref().unwrap().mask, expected);
        }
        // Perfect self-consistency on the source side.
        assert!((out.report.per_language[&base] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exnli_projection_matches_generator_gold() {
        let corpus = crate::corpus::generate(37, 12, 3, 0.75).unwrap();
        let base = corpus.base_language().to_string();
        let entries: Vec<DatasetEntry> = corpus.entries().cloned().collect();
        // Source scores = gold highlights, so binarization at 0.5 is exact.
        let mut source_attr = BTreeMap::new();
        for e in entries.iter().filter(|e| e.pair.language == base) {
            let scores: Vec<f64> = e
                .highlight
                .as_ref()
                .unwrap()
                .mask
                .iter()
                .map(|b| if *b { 1.0 } else { 0.0 })
                .collect();
            source_attr.insert(e.pair.id.clone(), vector(&e.pair.id, &base, scores));
        }
        let alignments = corpus.alignments_by_language();
        let out = build_exnli(
            &base,
            &entries,
            &source_attr,
            &BTreeMap::new(),
            &alignments,
            0.5,
        )
        .unwrap();
        assert_eq!(out.report.metrics["omitted_total"], 0.0);
        for (language, dataset) in &out.datasets {
            if language == &base {
                continue;
            }
            for entry in dataset {
                let generated = entries
                    .iter()
                    .find(|e| e.pair.language == *language && e.pair.id == entry.pair.id)
                    .unwrap();
                assert_eq!(
                    entry.highlight.as_ref().unwrap().mask,
                    generated.highlight.as_ref().unwrap().mask,
                    "projection must equal the generator's gold highlight"
                );
            }
        }
    }

    #[test]
    fn exnli_missing_alignment_omits_and_logs() {
        let corpus = crate::corpus::generate(41, 6, 2, 0.67).unwrap();
        let base = corpus.base_language().to_string();
        let entries: Vec<DatasetEntry> = corpus.entries().cloned().collect();
        let mut source_attr = BTreeMap::new();
        for e in entries.iter().filter(|e| e.pair.language == base) {
            let n = e.pair.word_count();
            source_attr.insert(
                e.pair.id.clone(),
                vector(&e.pair.id, &base, (0..n).map(|i| i as f64 + 1.0).collect()),
            );
        }
        let mut alignments = corpus.alignments_by_language();
        let victim = entries
            .iter()
            .find(|e| e.pair.language != base)
            .unwrap()
            .pair
            .id
            .clone();
        let lang = entries
            .iter()
            .find(|e| e.pair.language != base)
            .unwrap()
            .pair
            .language
            .clone();
        alignments.get_mut(&lang).unwrap().remove(&victim);
        let out = build_exnli(
            &base,
            &entries,
            &source_attr,
            &BTreeMap::new(),
            &alignments,
            0.3,
        )
        .unwrap();
        assert_eq!(out.report.metrics["omitted_total"], 1.0);
        assert_eq!(out.omitted[&lang], vec![victim.clone()]);
        assert!(out.datasets[&lang].iter().all(|e| e.pair.id != victim));
    }
}
