//! Domain types shared by all modules: instances, attribution vectors,
//! alignments, highlight masks, and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::all_finite;

pub const NUM_CLASSES: usize = 3;

/// Gold label of a premise–hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn index(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Neutral => 1,
            Label::Contradiction => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "entailment" => Some(Label::Entailment),
            "neutral" => Some(Label::Neutral),
            "contradiction" => Some(Label::Contradiction),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }
}

/// One premise–hypothesis instance in one language.
///
/// `special_mask` covers the full model input sequence
/// `[CLS] premise… [SEP] hypothesis… [SEP]` and is true exactly at the three
/// special positions. Word indices used by attributions, alignments, and
/// highlights count only the non-special positions: premise words first,
/// then hypothesis words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub id: String,
    pub language: String,
    pub premise_words: Vec<String>,
    pub hypothesis_words: Vec<String>,
    pub label: Label,
    pub special_mask: Vec<bool>,
}

impl TokenizedPair {
    pub fn new(
        id: impl Into<String>,
        language: impl Into<String>,
        premise_words: Vec<String>,
        hypothesis_words: Vec<String>,
        label: Label,
    ) -> Result<Self> {
        if premise_words.is_empty() {
            return Err(Error::InvalidInput("premise must be non-empty".into()));
        }
        if hypothesis_words.is_empty() {
            return Err(Error::InvalidInput("hypothesis must be non-empty".into()));
        }
        let mut special_mask = Vec::with_capacity(premise_words.len() + hypothesis_words.len() + 3);
        special_mask.push(true);
        special_mask.extend(std::iter::repeat(false).take(premise_words.len()));
        special_mask.push(true);
        special_mask.extend(std::iter::repeat(false).take(hypothesis_words.len()));
        special_mask.push(true);
        Ok(TokenizedPair {
            id: id.into(),
            language: language.into(),
            premise_words,
            hypothesis_words,
            label,
            special_mask,
        })
    }

    pub fn premise_len(&self) -> usize {
        self.premise_words.len()
    }

    pub fn hypothesis_len(&self) -> usize {
        self.hypothesis_words.len()
    }

    /// Number of non-special positions.
    pub fn word_count(&self) -> usize {
        self.premise_words.len() + self.hypothesis_words.len()
    }

    /// Full model input length including the three specials.
    pub fn input_len(&self) -> usize {
        self.word_count() + 3
    }

    /// Word at a non-special index (premise first, then hypothesis).
    pub fn word(&self, index: usize) -> Option<&str> {
        if index < self.premise_words.len() {
            self.premise_words.get(index).map(String::as_str)
        } else {
            self.hypothesis_words
                .get(index - self.premise_words.len())
                .map(String::as_str)
        }
    }

    /// All non-special words in index order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.premise_words
            .iter()
            .chain(self.hypothesis_words.iter())
            .map(String::as_str)
    }
}

/// Attribution method identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Saliency,
    InputXGradient,
    GuidedBackprop,
    IntegratedGradients,
    Lime,
    Occlusion,
    ShapleySampling,
    Activation,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Saliency,
        Method::InputXGradient,
        Method::GuidedBackprop,
        Method::IntegratedGradients,
        Method::Lime,
        Method::Occlusion,
        Method::ShapleySampling,
        Method::Activation,
    ];

    /// Methods that natively emit one score per word and therefore take no
    /// aggregation.
    pub fn is_per_word(self) -> bool {
        matches!(
            self,
            Method::Lime | Method::Occlusion | Method::ShapleySampling
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::InputXGradient => "input-x-gradient",
            Method::GuidedBackprop => "guided-backprop",
            Method::IntegratedGradients => "integrated-gradients",
            Method::Lime => "lime",
            Method::Occlusion => "occlusion",
            Method::ShapleySampling => "shapley-sampling",
            Method::Activation => "activation",
        }
    }
}

/// Scalar the attribution is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutputMechanism {
    /// Probability of the predicted class.
    #[serde(rename = "tp")]
    TopPrediction,
    /// Cross-entropy against the gold label.
    #[serde(rename = "loss")]
    Loss,
}

impl OutputMechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMechanism::TopPrediction => "tp",
            OutputMechanism::Loss => "loss",
        }
    }
}

/// How per-dimension embedding scores collapse to one score per word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    L2,
    None,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::L2 => "l2",
            Aggregation::None => "none",
        }
    }
}

/// Per-word importance scores for one instance, tagged with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub instance_id: String,
    pub language: String,
    pub method: Method,
    #[serde(rename = "output")]
    pub output_mechanism: OutputMechanism,
    pub aggregation: Aggregation,
    pub scores: Vec<f64>,
}

impl AttributionVector {
    pub fn validate(&self) -> Result<()> {
        if !all_finite(&self.scores) {
            return Err(Error::NonFinite(format!(
                "attribution scores for instance {}",
                self.instance_id
            )));
        }
        let needs_none = self.method.is_per_word();
        let has_none = self.aggregation == Aggregation::None;
        if needs_none != has_none {
            return Err(Error::InvalidConfig(format!(
                "method {} with aggregation {}: aggregation must be {}",
                self.method.as_str(),
                self.aggregation.as_str(),
                if needs_none { "none" } else { "mean or l2" },
            )));
        }
        Ok(())
    }

    /// Checks the score count against the referenced instance.
    pub fn validate_against(&self, pair: &TokenizedPair) -> Result<()> {
        self.validate()?;
        if self.scores.len() != pair.word_count() {
            return Err(Error::InvalidInput(format!(
                "instance {}: {} scores for {} words",
                self.instance_id,
                self.scores.len(),
                pair.word_count()
            )));
        }
        Ok(())
    }
}

/// Word alignment between one instance and its translation: pairs of
/// (source word index, target word index) over non-special positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentSet {
    pub instance_id: String,
    pub source_language: String,
    pub target_language: String,
    pub pairs: BTreeSet<(usize, usize)>,
}

impl AlignmentSet {
    pub fn new(
        instance_id: impl Into<String>,
        source_language: impl Into<String>,
        target_language: impl Into<String>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        AlignmentSet {
            instance_id: instance_id.into(),
            source_language: source_language.into(),
            target_language: target_language.into(),
            pairs: pairs.into_iter().collect(),
        }
    }

    /// Validates index ranges against the word counts of both sides.
    pub fn validate_lengths(&self, source_len: usize, target_len: usize) -> Result<()> {
        for &(k, j) in &self.pairs {
            if k >= source_len || j >= target_len {
                return Err(Error::InvalidInput(format!(
                    "alignment pair {k}-{j} out of range for instance {} ({source_len} source words, {target_len} target words)",
                    self.instance_id
                )));
            }
        }
        Ok(())
    }
}

/// Binary per-word rationale annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighlightMask {
    pub instance_id: String,
    pub language: String,
    pub mask: Vec<bool>,
}

impl HighlightMask {
    pub fn new(
        instance_id: impl Into<String>,
        language: impl Into<String>,
        mask: Vec<bool>,
    ) -> Self {
        HighlightMask {
            instance_id: instance_id.into(),
            language: language.into(),
            mask,
        }
    }

    pub fn validate_against(&self, pair: &TokenizedPair) -> Result<()> {
        if self.mask.len() != pair.word_count() {
            return Err(Error::InvalidInput(format!(
                "instance {}: highlight length {} does not match {} words",
                self.instance_id,
                self.mask.len(),
                pair.word_count()
            )));
        }
        Ok(())
    }

    pub fn positive_count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }
}

/// One dataset line: the instance plus its optional gold highlight.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub pair: TokenizedPair,
    pub highlight: Option<HighlightMask>,
}

/// Metric results with a full configuration echo.
///
/// All maps are ordered so serialization is deterministic.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: BTreeMap<String, serde_json::Value>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub per_language: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_instance: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn new() -> Self {
        EvalReport::default()
    }

    pub fn set_config(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    /// Range checks: correlation-style values must lie in [-1, 1] and
    /// ratio-style values (MAP/AP, precision, recall, F1, accuracy,
    /// coverage) in [0, 1]. Keys are classified by name.
    pub fn validate(&self) -> Result<()> {
        for (key, value) in &self.metrics {
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("metric {key}")));
            }
            if let Some((lo, hi)) = range_for_key(key) {
                if *value < lo || *value > hi {
                    return Err(Error::InvalidInput(format!(
                        "metric {key} = {value} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        let per_language_range = self
            .config
            .get("per_language_metric")
            .and_then(|v| v.as_str())
            .and_then(range_for_key)
            .unwrap_or((-1.0, 1.0));
        for (lang, value) in &self.per_language {
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("per-language value for {lang}")));
            }
            let (lo, hi) = per_language_range;
            if *value < lo || *value > hi {
                return Err(Error::InvalidInput(format!(
                    "per-language value for {lang} = {value} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

fn range_for_key(key: &str) -> Option<(f64, f64)> {
    let correlation = key.starts_with("rho")
        || key.contains("spearman")
        || key.contains("pearson_r")
        || key.ends_with("_correlation");
    if correlation {
        return Some((-1.0, 1.0));
    }
    let ratio = key == "map"
        || key == "ap"
        || key.starts_with("ap_")
        || key.contains("precision")
        || key.contains("recall")
        || key.contains("f1")
        || key.contains("accuracy")
        || key.contains("coverage");
    if ratio {
        return Some((0.0, 1.0));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_mask_shape() {
        let pair = TokenizedPair::new(
            "e1",
            "en",
            vec!["a".into(), "b".into()],
            vec!["a".into()],
            Label::Entailment,
        )
        .unwrap();
        assert_eq!(pair.word_count(), 3);
        assert_eq!(pair.input_len(), 6);
        assert_eq!(
            pair.special_mask,
            vec![true, false, false, true, false, true]
        );
        assert_eq!(pair.special_mask.iter().filter(|b| **b).count(), 3);
        assert_eq!(pair.word(0), Some("a"));
        assert_eq!(pair.word(2), Some("a"));
        assert_eq!(pair.word(3), None);
    }

    #[test]
    fn empty_segments_rejected() {
        assert!(TokenizedPair::new("e", "en", vec![], vec!["x".into()], Label::Neutral).is_err());
        assert!(TokenizedPair::new("e", "en", vec!["x".into()], vec![], Label::Neutral).is_err());
    }

    #[test]
    fn attribution_aggregation_contract() {
        let mut v = AttributionVector {
            instance_id: "e1".into(),
            language: "en".into(),
            method: Method::Lime,
            output_mechanism: OutputMechanism::TopPrediction,
            aggregation: Aggregation::None,
            scores: vec![0.1, 0.2],
        };
        assert!(v.validate().is_ok());
        v.aggregation = Aggregation::Mean;
        assert!(v.validate().is_err());
        v.method = Method::Saliency;
        assert!(v.validate().is_ok());
        v.aggregation = Aggregation::None;
        assert!(v.validate().is_err());
        v.aggregation = Aggregation::L2;
        v.scores = vec![f64::NAN];
        assert!(v.validate().is_err());
    }

    #[test]
    fn alignment_range_check() {
        let a = AlignmentSet::new("e1", "en", "de", vec![(0, 0), (1, 2)]);
        assert!(a.validate_lengths(2, 3).is_ok());
        assert!(a.validate_lengths(2, 2).is_err());
        assert!(a.validate_lengths(1, 3).is_err());
    }

    #[test]
    fn alignment_pairs_deduplicate() {
        let a = AlignmentSet::new("e1", "en", "de", vec![(0, 0), (0, 0), (1, 1)]);
        assert_eq!(a.pairs.len(), 2);
    }

    #[test]
    fn report_range_validation() {
        let mut r = EvalReport::new();
        r.metrics.insert("rho_overall".into(), 0.5);
        r.metrics.insert("map".into(), 0.9);
        assert!(r.validate().is_ok());
        r.metrics.insert("rho_overall".into(), 1.5);
        assert!(r.validate().is_err());
        r.metrics.insert("rho_overall".into(), -0.5);
        r.metrics.insert("map".into(), -0.1);
        assert!(r.validate().is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(Label::parse("entailment"), Some(Label::Entailment));
        assert_eq!(Label::parse("maybe"), None);
        for l in Label::ALL {
            assert_eq!(Label::from_index(l.index()), Some(l));
            assert_eq!(Label::parse(l.as_str()), Some(l));
        }
    }
}
