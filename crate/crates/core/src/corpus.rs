//! Synthetic multiway-parallel NLI corpora with gold word alignments and
//! gold rationales.
//!
//! Label rule: a pair is entailment iff the hypothesis content words are a
//! subset of the premise content words; otherwise contradiction iff the
//! premise and hypothesis contain an antonym pair; otherwise neutral. The
//! generator keeps the three cases lexically disjoint (antonym words appear
//! only in contradictions, hypothesis-only marker words only in neutrals),
//! which makes the task linearly separable for a bag-of-words classifier.
//!
//! Gold highlights mark the words that decide the label: the shared words
//! for entailment, the antonym words for contradiction, and the
//! hypothesis-only words for neutral. Translations replace each base word
//! with one or two target words (two with probability
//! [`CorpusOptions::split_probability`]), so alignment-projected score sums
//! are exercised on one-to-many links.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{AlignmentSet, DatasetEntry, HighlightMask, Label, TokenizedPair};
use crate::error::{Error, Result};
use crate::util::derived_seed;

/// Size and shape knobs for the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusOptions {
    pub plain_words: usize,
    pub antonym_pairs: usize,
    pub marker_words: usize,
    /// Inclusive range of premise lengths (plain words, before any antonym
    /// insertion).
    pub premise_len: (usize, usize),
    /// Probability that a base word maps to two words in a target language.
    pub split_probability: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            plain_words: 40,
            antonym_pairs: 8,
            marker_words: 10,
            premise_len: (3, 6),
            split_probability: 0.2,
        }
    }
}

/// Deterministic per-language word mappings over a base vocabulary.
///
/// Base words are the surface forms of the first language. Every other
/// language maps each base word to one or two unique words of its own, so
/// mappings are injective and target vocabularies are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLexicon {
    languages: Vec<String>,
    plain: Vec<String>,
    antonym_pairs: Vec<(String, String)>,
    markers: Vec<String>,
    /// language -> base word -> target word sequence.
    mappings: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    /// language -> target word -> base word.
    reverse: BTreeMap<String, BTreeMap<String, String>>,
}

impl SyntheticLexicon {
    pub fn build(seed: u64, n_languages: usize, options: &CorpusOptions) -> Result<Self> {
        if n_languages < 2 {
            return Err(Error::InvalidConfig(
                "at least two languages are required".into(),
            ));
        }
        if options.plain_words < options.premise_len.1
            || options.antonym_pairs == 0
            || options.marker_words == 0
        {
            return Err(Error::InvalidConfig("lexicon sizes are too small".into()));
        }
        let languages: Vec<String> = (0..n_languages).map(|i| format!("syn{i}")).collect();
        let plain: Vec<String> = (0..options.plain_words).map(|i| format!("w{i:02}")).collect();
        let antonym_pairs: Vec<(String, String)> = (0..options.antonym_pairs)
            .map(|i| (format!("a{i:02}p"), format!("a{i:02}n")))
            .collect();
        let markers: Vec<String> = (0..options.marker_words).map(|i| format!("m{i:02}")).collect();

        let base_words: Vec<&String> = plain
            .iter()
            .chain(antonym_pairs.iter().flat_map(|(a, b)| [a, b]))
            .chain(markers.iter())
            .collect();

        let mut mappings = BTreeMap::new();
        let mut reverse = BTreeMap::new();
        for lang in &languages {
            let mut map = BTreeMap::new();
            let mut rev = BTreeMap::new();
            if lang == &languages[0] {
                for w in &base_words {
                    map.insert((*w).clone(), vec![(*w).clone()]);
                    rev.insert((*w).clone(), (*w).clone());
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, lang));
                for w in &base_words {
                    let split = rng.random::<f64>() < options.split_probability;
                    let targets = if split {
                        vec![format!("{w}_{lang}_a"), format!("{w}_{lang}_b")]
                    } else {
                        vec![format!("{w}_{lang}")]
                    };
                    for t in &targets {
                        rev.insert(t.clone(), (*w).clone());
                    }
                    map.insert((*w).clone(), targets);
                }
            }
            mappings.insert(lang.clone(), map);
            reverse.insert(lang.clone(), rev);
        }
        Ok(SyntheticLexicon {
            languages,
            plain,
            antonym_pairs,
            markers,
            mappings,
            reverse,
        })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn base_language(&self) -> &str {
        &self.languages[0]
    }

    /// Translates a base-language word sequence, returning the target words
    /// and, per base position, the indices of its target words.
    pub fn translate_segment(&self, language: &str, words: &[String]) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
        let map = self
            .mappings
            .get(language)
            .ok_or_else(|| Error::InvalidInput(format!("unknown language {language}")))?;
        let mut out = Vec::new();
        let mut spans = Vec::with_capacity(words.len());
        for w in words {
            let targets = map
                .get(w)
                .ok_or_else(|| Error::InvalidInput(format!("word {w} is not in the lexicon")))?;
            let start = out.len();
            out.extend(targets.iter().cloned());
            spans.push((start..out.len()).collect());
        }
        Ok((out, spans))
    }

    fn base_word_of<'a>(&'a self, language: &str, word: &str) -> Option<&'a str> {
        self.reverse
            .get(language)
            .and_then(|rev| rev.get(word))
            .map(String::as_str)
    }

    fn is_antonym_pair(&self, a: &str, b: &str) -> bool {
        self.antonym_pairs
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    /// Applies the label rule to an instance in any of the lexicon's
    /// languages by mapping words back to their base forms.
    pub fn label_of(
        &self,
        language: &str,
        premise: &[String],
        hypothesis: &[String],
    ) -> Result<Label> {
        let to_base = |words: &[String]| -> Result<BTreeSet<String>> {
            words
                .iter()
                .map(|w| {
                    self.base_word_of(language, w)
                        .map(str::to_string)
                        .ok_or_else(|| {
                            Error::InvalidInput(format!("word {w} is not in language {language}"))
                        })
                })
                .collect()
        };
        let p = to_base(premise)?;
        let h = to_base(hypothesis)?;
        if h.is_subset(&p) {
            return Ok(Label::Entailment);
        }
        let crossed = p
            .iter()
            .any(|a| h.iter().any(|b| self.is_antonym_pair(a, b)));
        if crossed {
            return Ok(Label::Contradiction);
        }
        Ok(Label::Neutral)
    }
}

/// A generated corpus: train/test splits over all languages plus gold
/// alignments from the base language to every other language.
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub lexicon: SyntheticLexicon,
    pub train: Vec<DatasetEntry>,
    pub test: Vec<DatasetEntry>,
    pub alignments: Vec<AlignmentSet>,
}

impl GeneratedCorpus {
    pub fn languages(&self) -> &[String] {
        self.lexicon.languages()
    }

    pub fn base_language(&self) -> &str {
        self.lexicon.base_language()
    }

    pub fn entries(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.train.iter().chain(self.test.iter())
    }

    /// Alignments grouped as target language -> instance id -> set.
    pub fn alignments_by_language(&self) -> BTreeMap<String, BTreeMap<String, AlignmentSet>> {
        let mut out: BTreeMap<String, BTreeMap<String, AlignmentSet>> = BTreeMap::new();
        for a in &self.alignments {
            out.entry(a.target_language.clone())
                .or_default()
                .insert(a.instance_id.clone(), a.clone());
        }
        out
    }
}

struct BaseInstance {
    premise: Vec<String>,
    hypothesis: Vec<String>,
    label: Label,
    /// Per base word position (premise then hypothesis): participates in the
    /// label decision.
    highlight: Vec<bool>,
}

fn sample_distinct(rng: &mut ChaCha8Rng, pool: usize, count: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..pool).collect();
    for i in 0..count {
        let j = rng.random_range(i..pool);
        indices.swap(i, j);
    }
    indices.truncate(count);
    indices
}

fn shuffle<T>(xs: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

fn generate_base_instance(
    lexicon: &SyntheticLexicon,
    options: &CorpusOptions,
    label: Label,
    rng: &mut ChaCha8Rng,
) -> BaseInstance {
    let (lo, hi) = options.premise_len;
    let n_premise = rng.random_range(lo..=hi);
    let mut premise: Vec<String> = sample_distinct(rng, lexicon.plain.len(), n_premise)
        .into_iter()
        .map(|i| lexicon.plain[i].clone())
        .collect();

    match label {
        Label::Entailment => {
            let n_h = rng.random_range(1..=3.min(premise.len()));
            let mut hypothesis: Vec<String> = sample_distinct(rng, premise.len(), n_h)
                .into_iter()
                .map(|i| premise[i].clone())
                .collect();
            shuffle(&mut hypothesis, rng);
            let shared: BTreeSet<&String> = hypothesis.iter().collect();
            let highlight: Vec<bool> = premise
                .iter()
                .map(|w| shared.contains(w))
                .chain(hypothesis.iter().map(|_| true))
                .collect();
            BaseInstance {
                premise,
                hypothesis,
                label,
                highlight,
            }
        }
        Label::Contradiction => {
            let (a, b) = {
                let pair = &lexicon.antonym_pairs[rng.random_range(0..lexicon.antonym_pairs.len())];
                if rng.random::<f64>() < 0.5 {
                    (pair.0.clone(), pair.1.clone())
                } else {
                    (pair.1.clone(), pair.0.clone())
                }
            };
            let slot = rng.random_range(0..=premise.len());
            premise.insert(slot, a.clone());
            let n_extra = rng.random_range(0..=2.min(premise.len() - 1));
            let mut hypothesis = vec![b.clone()];
            let plain_positions: Vec<usize> = (0..premise.len()).filter(|i| premise[*i] != a).collect();
            for idx in sample_distinct(rng, plain_positions.len(), n_extra) {
                hypothesis.push(premise[plain_positions[idx]].clone());
            }
            shuffle(&mut hypothesis, rng);
            let highlight: Vec<bool> = premise
                .iter()
                .map(|w| *w == a)
                .chain(hypothesis.iter().map(|w| *w == b))
                .collect();
            BaseInstance {
                premise,
                hypothesis,
                label,
                highlight,
            }
        }
        Label::Neutral => {
            let n_markers = rng.random_range(1..=2);
            let mut hypothesis: Vec<String> = sample_distinct(rng, lexicon.markers.len(), n_markers)
                .into_iter()
                .map(|i| lexicon.markers[i].clone())
                .collect();
            let n_extra = rng.random_range(0..=2.min(premise.len()));
            for idx in sample_distinct(rng, premise.len(), n_extra) {
                hypothesis.push(premise[idx].clone());
            }
            shuffle(&mut hypothesis, rng);
            let marker_set: BTreeSet<&String> = lexicon.markers.iter().collect();
            let highlight: Vec<bool> = premise
                .iter()
                .map(|_| false)
                .chain(hypothesis.iter().map(|w| marker_set.contains(w)))
                .collect();
            BaseInstance {
                premise,
                hypothesis,
                label,
                highlight,
            }
        }
    }
}

/// Generates `n_instances` base-language instances plus translations into
/// every other language, with gold alignments and highlights, split into
/// train and test by base instance.
pub fn generate(
    seed: u64,
    n_instances: usize,
    n_languages: usize,
    split_fraction: f64,
) -> Result<GeneratedCorpus> {
    generate_with(&CorpusOptions::default(), seed, n_instances, n_languages, split_fraction)
}

pub fn generate_with(
    options: &CorpusOptions,
    seed: u64,
    n_instances: usize,
    n_languages: usize,
    split_fraction: f64,
) -> Result<GeneratedCorpus> {
    if n_instances == 0 {
        return Err(Error::InvalidConfig("n_instances must be at least 1".into()));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split_fraction {split_fraction} outside (0, 1)"
        )));
    }
    let lexicon = SyntheticLexicon::build(seed, n_languages, options)?;

    let mut all_entries: Vec<Vec<DatasetEntry>> = Vec::with_capacity(n_instances);
    let mut alignments = Vec::new();
    for i in 0..n_instances {
        let id = format!("i{i:06}");
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, &format!("instance/{id}")));
        let label = Label::from_index(i % 3).expect("three labels");
        let base = generate_base_instance(&lexicon, options, label, &mut rng);
        debug_assert_eq!(
            lexicon
                .label_of(lexicon.base_language(), &base.premise, &base.hypothesis)
                .expect("base words in lexicon"),
            base.label
        );

        let mut per_language = Vec::with_capacity(n_languages);
        for lang in lexicon.languages() {
            let (premise_t, premise_spans) = lexicon.translate_segment(lang, &base.premise)?;
            let (hypothesis_t, hypothesis_spans) =
                lexicon.translate_segment(lang, &base.hypothesis)?;
            let pair = TokenizedPair::new(
                id.clone(),
                lang.clone(),
                premise_t.clone(),
                hypothesis_t.clone(),
                base.label,
            )?;

            // Target highlight: a target word is gold iff its base word is.
            let mut mask = vec![false; pair.word_count()];
            for (k, span) in premise_spans.iter().enumerate() {
                if base.highlight[k] {
                    for &j in span {
                        mask[j] = true;
                    }
                }
            }
            for (k, span) in hypothesis_spans.iter().enumerate() {
                if base.highlight[base.premise.len() + k] {
                    for &j in span {
                        mask[premise_t.len() + j] = true;
                    }
                }
            }

            if lang != lexicon.base_language() {
                let mut pairs = Vec::new();
                for (k, span) in premise_spans.iter().enumerate() {
                    for &j in span {
                        pairs.push((k, j));
                    }
                }
                for (k, span) in hypothesis_spans.iter().enumerate() {
                    for &j in span {
                        pairs.push((base.premise.len() + k, premise_t.len() + j));
                    }
                }
                alignments.push(AlignmentSet::new(
                    id.clone(),
                    lexicon.base_language(),
                    lang.clone(),
                    pairs,
                ));
            }

            per_language.push(DatasetEntry {
                highlight: Some(HighlightMask::new(id.clone(), lang.clone(), mask)),
                pair,
            });
        }
        all_entries.push(per_language);
    }

    let train_count = ((n_instances as f64) * split_fraction).ceil() as usize;
    let train_count = train_count.clamp(1, n_instances);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, group) in all_entries.into_iter().enumerate() {
        if i < train_count {
            train.extend(group);
        } else {
            test.extend(group);
        }
    }

    Ok(GeneratedCorpus {
        lexicon,
        train,
        test,
        alignments,
    })
}
