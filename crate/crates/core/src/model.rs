//! A small differentiable 3-class classifier over word sequences.
//!
//! Architecture: embed words, mean-pool the premise and hypothesis words
//! separately, concatenate to a 2d vector, one ReLU hidden layer, linear
//! output, softmax. Gradients with respect to the input word embeddings are
//! computed in closed form, with an optional guided mode that overrides the
//! ReLU backward rule so only positive gradients pass through.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Label, TokenizedPair, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::util::{argmax_tie_lowest, pairwise_mean};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Index layout of the reserved rows.
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Embedding width d.
    pub embedding: usize,
    /// Hidden width h.
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            embedding: 16,
            hidden: 32,
        }
    }
}

/// Dense word-to-index map with the reserved `[PAD]`, `[UNK]`, `[CLS]`,
/// `[SEP]` rows at fixed indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    map: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from an iterator of words (reserved words are
    /// added first; duplicates collapse; order of the rest is sorted).
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Vocabulary {
        let mut map = BTreeMap::new();
        for (i, w) in [PAD, UNK, CLS, SEP].iter().enumerate() {
            map.insert((*w).to_string(), i);
        }
        let mut rest: Vec<&str> = words
            .into_iter()
            .filter(|w| !map.contains_key(*w))
            .collect();
        rest.sort_unstable();
        rest.dedup();
        for w in rest {
            let next = map.len();
            map.insert(w.to_string(), next);
        }
        Vocabulary { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Index of `word`, falling back to the `[UNK]` row.
    pub fn index_of(&self, word: &str) -> usize {
        self.map.get(word).copied().unwrap_or(UNK_INDEX)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.map.contains_key(word)
    }

    pub fn validate(&self) -> Result<()> {
        for (w, i) in [(PAD, 0usize), (UNK, 1), (CLS, 2), (SEP, 3)] {
            if self.map.get(w) != Some(&i) {
                return Err(Error::InvalidInput(format!(
                    "vocabulary is missing reserved word {w} at index {i}"
                )));
            }
        }
        let mut seen = vec![false; self.map.len()];
        for &i in self.map.values() {
            if i >= seen.len() || seen[i] {
                return Err(Error::InvalidInput(
                    "vocabulary indices are not dense".into(),
                ));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// All trainable parameters, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub seed: u64,
    pub vocabulary: Vocabulary,
    /// |V| x d.
    pub embedding: Vec<f64>,
    /// h x 2d.
    pub w1: Vec<f64>,
    /// h.
    pub b1: Vec<f64>,
    /// 3 x h.
    pub w2: Vec<f64>,
    /// 3.
    pub b2: Vec<f64>,
}

impl ModelParams {
    /// Random initialization. The `[PAD]` row is zeroed so the perturbation
    /// baseline is the zero embedding; it is never touched by training
    /// because `[PAD]` does not occur in training data.
    pub fn init(vocabulary: Vocabulary, dims: ModelDims, seed: u64) -> Result<Self> {
        vocabulary.validate()?;
        if dims.embedding == 0 || dims.hidden == 0 {
            return Err(Error::InvalidConfig("model dims must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = vocabulary.len();
        let d = dims.embedding;
        let h = dims.hidden;
        let mut embedding: Vec<f64> = (0..v * d).map(|_| rng.random_range(-0.5..0.5)).collect();
        for x in embedding[PAD_INDEX * d..(PAD_INDEX + 1) * d].iter_mut() {
            *x = 0.0;
        }
        let a1 = (6.0 / (2 * d + h) as f64).sqrt();
        let w1 = (0..h * 2 * d).map(|_| rng.random_range(-a1..a1)).collect();
        let a2 = (6.0 / (h + NUM_CLASSES) as f64).sqrt();
        let w2 = (0..NUM_CLASSES * h)
            .map(|_| rng.random_range(-a2..a2))
            .collect();
        Ok(ModelParams {
            dims,
            seed,
            vocabulary,
            embedding,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: vec![0.0; NUM_CLASSES],
        })
    }

    pub fn embedding_row(&self, index: usize) -> &[f64] {
        let d = self.dims.embedding;
        &self.embedding[index * d..(index + 1) * d]
    }

    pub fn pad_embedding(&self) -> &[f64] {
        self.embedding_row(PAD_INDEX)
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary.validate()?;
        let v = self.vocabulary.len();
        let d = self.dims.embedding;
        let h = self.dims.hidden;
        if self.embedding.len() != v * d
            || self.w1.len() != h * 2 * d
            || self.b1.len() != h
            || self.w2.len() != NUM_CLASSES * h
            || self.b2.len() != NUM_CLASSES
        {
            return Err(Error::InvalidInput("parameter shapes are inconsistent".into()));
        }
        let finite = self.embedding.iter().chain(&self.w1).chain(&self.b1)
            .chain(&self.w2).chain(&self.b2).all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Saves the checkpoint as a single JSON file.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string(self).expect("params serialize");
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let params: ModelParams = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("bad checkpoint: {e}"),
        })?;
        params.validate()?;
        Ok(params)
    }

    /// Embeddings for every non-special position of `pair`: premise words
    /// first, then hypothesis words. Unknown words map to the `[UNK]` row.
    pub fn embed_pair(&self, pair: &TokenizedPair) -> Vec<Vec<f64>> {
        pair.words()
            .map(|w| self.embedding_row(self.vocabulary.index_of(w)).to_vec())
            .collect()
    }
}

/// Every intermediate value of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input embeddings per non-special position (premise then hypothesis).
    pub embeddings: Vec<Vec<f64>>,
    pub premise_len: usize,
    pub premise_mean: Vec<f64>,
    pub hypothesis_mean: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
}

fn mean_pool(embs: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for e in embs {
        for (o, x) in out.iter_mut().zip(e) {
            *o += *x;
        }
    }
    let n = embs.len() as f64;
    for o in &mut out {
        *o /= n;
    }
    out
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Forward pass from explicit embeddings. `premise_len` splits the embedding
/// list into the two segments.
pub fn forward_embedded(
    params: &ModelParams,
    embeddings: Vec<Vec<f64>>,
    premise_len: usize,
) -> Result<ForwardTrace> {
    let d = params.dims.embedding;
    let h = params.dims.hidden;
    if premise_len == 0 || premise_len >= embeddings.len() {
        return Err(Error::InvalidInput(
            "both segments must contain at least one word".into(),
        ));
    }
    let premise_mean = mean_pool(&embeddings[..premise_len], d);
    let hypothesis_mean = mean_pool(&embeddings[premise_len..], d);

    let mut pre_activation = vec![0.0; h];
    for (i, z) in pre_activation.iter_mut().enumerate() {
        let row = &params.w1[i * 2 * d..(i + 1) * 2 * d];
        let mut acc = params.b1[i];
        for (w, x) in row[..d].iter().zip(&premise_mean) {
            acc += w * x;
        }
        for (w, x) in row[d..].iter().zip(&hypothesis_mean) {
            acc += w * x;
        }
        *z = acc;
    }
    let hidden: Vec<f64> = pre_activation.iter().map(|z| z.max(0.0)).collect();

    let mut logits = vec![0.0; NUM_CLASSES];
    for (c, l) in logits.iter_mut().enumerate() {
        let row = &params.w2[c * h..(c + 1) * h];
        *l = params.b2[c] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>();
    }
    let probabilities = softmax(&logits);
    if !probabilities.iter().all(|p| p.is_finite()) {
        return Err(Error::NonFinite("softmax probabilities".into()));
    }
    let predicted_class = argmax_tie_lowest(&probabilities);
    Ok(ForwardTrace {
        embeddings,
        premise_len,
        premise_mean,
        hypothesis_mean,
        pre_activation,
        hidden,
        logits,
        probabilities,
        predicted_class,
    })
}

/// Forward pass over a tokenized pair.
pub fn forward(params: &ModelParams, pair: &TokenizedPair) -> Result<ForwardTrace> {
    if pair.premise_words.is_empty() || pair.hypothesis_words.is_empty() {
        return Err(Error::InvalidInput(
            "premise and hypothesis must be non-empty".into(),
        ));
    }
    forward_embedded(params, params.embed_pair(pair), pair.premise_len())
}

/// Scalar outputs attributions are computed against. `TopPrediction` reads
/// the probability of the trace's own predicted class; `Loss` is the
/// cross-entropy against the gold label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    TopPrediction,
    Loss,
}

pub fn output_value(trace: &ForwardTrace, kind: OutputKind, gold: Option<Label>) -> Result<f64> {
    match kind {
        OutputKind::TopPrediction => Ok(trace.probabilities[trace.predicted_class]),
        OutputKind::Loss => {
            let gold = gold.ok_or_else(|| {
                Error::InvalidInput("loss output requires a gold label".into())
            })?;
            let p = trace.probabilities[gold.index()];
            let loss = -p.ln();
            if !loss.is_finite() {
                return Err(Error::NonFinite("cross-entropy loss".into()));
            }
            Ok(loss)
        }
    }
}

/// A differentiable scalar with the target class frozen, so the same
/// function is evaluated at perturbed or interpolated inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scalar {
    /// Probability of a fixed class.
    ClassProbability(usize),
    /// Negative log probability of a fixed (gold) class.
    NegLogProbability(usize),
}

impl Scalar {
    /// Freezes the scalar for `mechanism` at the given trace: the predicted
    /// class for `TopPrediction`, the gold class for `Loss`.
    pub fn freeze(
        mechanism: crate::data::OutputMechanism,
        trace: &ForwardTrace,
        gold: Option<Label>,
    ) -> Result<Scalar> {
        match mechanism {
            crate::data::OutputMechanism::TopPrediction => {
                Ok(Scalar::ClassProbability(trace.predicted_class))
            }
            crate::data::OutputMechanism::Loss => {
                let gold = gold.ok_or_else(|| {
                    Error::InvalidInput("loss output requires a gold label".into())
                })?;
                Ok(Scalar::NegLogProbability(gold.index()))
            }
        }
    }

    pub fn value(self, trace: &ForwardTrace) -> Result<f64> {
        match self {
            Scalar::ClassProbability(c) => Ok(trace.probabilities[c]),
            Scalar::NegLogProbability(c) => {
                let v = -trace.probabilities[c].ln();
                if !v.is_finite() {
                    return Err(Error::NonFinite("cross-entropy loss".into()));
                }
                Ok(v)
            }
        }
    }

    /// d scalar / d logits at the given trace.
    fn logit_gradient(self, trace: &ForwardTrace) -> Vec<f64> {
        let p = &trace.probabilities;
        match self {
            Scalar::ClassProbability(c) => (0..NUM_CLASSES)
                .map(|i| p[c] * (if i == c { 1.0 } else { 0.0 } - p[i]))
                .collect(),
            Scalar::NegLogProbability(c) => (0..NUM_CLASSES)
                .map(|i| p[i] - if i == c { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

/// ReLU backward rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    Plain,
    /// Pass a gradient through a ReLU node only where the forward
    /// pre-activation and the incoming gradient are both positive.
    Guided,
}

/// Gradient of `scalar` with respect to each word embedding, one d-vector
/// per non-special position, from explicit embeddings.
pub fn grad_embedded(
    params: &ModelParams,
    embeddings: &[Vec<f64>],
    premise_len: usize,
    scalar: Scalar,
    mode: GradMode,
) -> Result<Vec<Vec<f64>>> {
    let trace = forward_embedded(params, embeddings.to_vec(), premise_len)?;
    grad_from_trace(params, &trace, scalar, mode)
}

/// Gradient from an already-computed trace.
pub fn grad_from_trace(
    params: &ModelParams,
    trace: &ForwardTrace,
    scalar: Scalar,
    mode: GradMode,
) -> Result<Vec<Vec<f64>>> {
    let d = params.dims.embedding;
    let h = params.dims.hidden;
    let dlogits = scalar.logit_gradient(trace);

    // d scalar / d hidden.
    let mut dhidden = vec![0.0; h];
    for (c, dl) in dlogits.iter().enumerate() {
        let row = &params.w2[c * h..(c + 1) * h];
        for (dh, w) in dhidden.iter_mut().zip(row) {
            *dh += dl * w;
        }
    }

    // ReLU backward.
    let dz: Vec<f64> = dhidden
        .iter()
        .zip(&trace.pre_activation)
        .map(|(g, z)| match mode {
            GradMode::Plain => {
                if *z > 0.0 {
                    *g
                } else {
                    0.0
                }
            }
            GradMode::Guided => {
                if *z > 0.0 && *g > 0.0 {
                    *g
                } else {
                    0.0
                }
            }
        })
        .collect();

    // d scalar / d pooled input (2d).
    let mut dx = vec![0.0; 2 * d];
    for (i, g) in dz.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        let row = &params.w1[i * 2 * d..(i + 1) * 2 * d];
        for (o, w) in dx.iter_mut().zip(row) {
            *o += g * w;
        }
    }

    let n_premise = trace.premise_len as f64;
    let n_hypothesis = (trace.embeddings.len() - trace.premise_len) as f64;
    let mut grads = Vec::with_capacity(trace.embeddings.len());
    for pos in 0..trace.embeddings.len() {
        let (segment, n) = if pos < trace.premise_len {
            (&dx[..d], n_premise)
        } else {
            (&dx[d..], n_hypothesis)
        };
        let g: Vec<f64> = segment.iter().map(|v| v / n).collect();
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("embedding gradient".into()));
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Gradient of the chosen output with respect to the input word embeddings
/// of `pair`. For `TopPrediction` the differentiated class is frozen at the
/// argmax of this pair's own forward pass.
pub fn grad_wrt_embeddings(
    params: &ModelParams,
    pair: &TokenizedPair,
    mechanism: crate::data::OutputMechanism,
    gold: Option<Label>,
    mode: GradMode,
) -> Result<Vec<Vec<f64>>> {
    let trace = forward(params, pair)?;
    let scalar = Scalar::freeze(mechanism, &trace, gold)?;
    grad_from_trace(params, &trace, scalar, mode)
}

/// Post-ReLU hidden vector; the representation used for similarity analysis.
pub fn hidden_representation(params: &ModelParams, pair: &TokenizedPair) -> Result<Vec<f64>> {
    Ok(forward(params, pair)?.hidden)
}

/// Training output: final parameters plus the training-set accuracy.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub final_accuracy: f64,
    pub final_loss: f64,
}

const BATCH_SIZE: usize = 8;

/// Mini-batch SGD with cross-entropy loss. Deterministic given `seed`:
/// instance order is reshuffled each epoch from a dedicated RNG and updates
/// are applied sequentially.
pub fn train(
    params: &ModelParams,
    dataset: &[TokenizedPair],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainedModel> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    params.validate()?;
    let mut p = params.clone();
    let d = p.dims.embedding;
    let h = p.dims.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..epochs {
        shuffle(&mut order, &mut rng);
        for batch in order.chunks(BATCH_SIZE) {
            let mut grad_w1 = vec![0.0; p.w1.len()];
            let mut grad_b1 = vec![0.0; h];
            let mut grad_w2 = vec![0.0; p.w2.len()];
            let mut grad_b2 = vec![0.0; NUM_CLASSES];
            // Sparse embedding gradient: row index -> d-vector.
            let mut grad_emb: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut batch_loss = 0.0;

            for &idx in batch {
                let pair = &dataset[idx];
                let trace = forward(&p, pair)?;
                let gold = pair.label.index();
                batch_loss += -trace.probabilities[gold].ln();

                // dLoss/dlogits = p - onehot(gold).
                let dlogits: Vec<f64> = (0..NUM_CLASSES)
                    .map(|c| trace.probabilities[c] - if c == gold { 1.0 } else { 0.0 })
                    .collect();
                for (c, dl) in dlogits.iter().enumerate() {
                    grad_b2[c] += dl;
                    let row = &mut grad_w2[c * h..(c + 1) * h];
                    for (gw, a) in row.iter_mut().zip(&trace.hidden) {
                        *gw += dl * a;
                    }
                }
                let mut dhidden = vec![0.0; h];
                for (c, dl) in dlogits.iter().enumerate() {
                    let row = &p.w2[c * h..(c + 1) * h];
                    for (dh, w) in dhidden.iter_mut().zip(row) {
                        *dh += dl * w;
                    }
                }
                let dz: Vec<f64> = dhidden
                    .iter()
                    .zip(&trace.pre_activation)
                    .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                    .collect();
                let x: Vec<f64> = trace
                    .premise_mean
                    .iter()
                    .chain(&trace.hypothesis_mean)
                    .cloned()
                    .collect();
                for (i, g) in dz.iter().enumerate() {
                    if *g == 0.0 {
                        continue;
                    }
                    grad_b1[i] += g;
                    let row = &mut grad_w1[i * 2 * d..(i + 1) * 2 * d];
                    for (gw, xv) in row.iter_mut().zip(&x) {
                        *gw += g * xv;
                    }
                }
                let mut dx = vec![0.0; 2 * d];
                for (i, g) in dz.iter().enumerate() {
                    if *g == 0.0 {
                        continue;
                    }
                    let row = &p.w1[i * 2 * d..(i + 1) * 2 * d];
                    for (o, w) in dx.iter_mut().zip(row) {
                        *o += g * w;
                    }
                }
                let n_p = pair.premise_len() as f64;
                let n_h = pair.hypothesis_len() as f64;
                for (pos, word) in pair.words().enumerate() {
                    let row_idx = p.vocabulary.index_of(word);
                    let (segment, n) = if pos < pair.premise_len() {
                        (&dx[..d], n_p)
                    } else {
                        (&dx[d..], n_h)
                    };
                    let acc = grad_emb.entry(row_idx).or_insert_with(|| vec![0.0; d]);
                    for (a, v) in acc.iter_mut().zip(segment) {
                        *a += v / n;
                    }
                }
            }

            let scale = lr / batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch}"
                )));
            }
            for (w, g) in p.w1.iter_mut().zip(&grad_w1) {
                *w -= scale * g;
            }
            for (b, g) in p.b1.iter_mut().zip(&grad_b1) {
                *b -= scale * g;
            }
            for (w, g) in p.w2.iter_mut().zip(&grad_w2) {
                *w -= scale * g;
            }
            for (b, g) in p.b2.iter_mut().zip(&grad_b2) {
                *b -= scale * g;
            }
            for (row_idx, g) in grad_emb {
                let row = &mut p.embedding[row_idx * d..(row_idx + 1) * d];
                for (w, gv) in row.iter_mut().zip(&g) {
                    *w -= scale * gv;
                }
            }
        }
    }

    let final_accuracy = accuracy(&p, dataset)?;
    let mut losses = Vec::with_capacity(dataset.len());
    for pair in dataset {
        let trace = forward(&p, pair)?;
        losses.push(-trace.probabilities[pair.label.index()].ln());
    }
    Ok(TrainedModel {
        params: p,
        final_accuracy,
        final_loss: pairwise_mean(&losses),
    })
}

/// Fisher–Yates with the crate's seeded RNG.
fn shuffle(xs: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

/// Fraction of instances whose predicted class equals the gold label.
pub fn accuracy(params: &ModelParams, dataset: &[TokenizedPair]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut correct = 0usize;
    for pair in dataset {
        if forward(params, pair)?.predicted_class == pair.label.index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutputMechanism;

    fn toy_pair(premise: &[&str], hypothesis: &[&str]) -> TokenizedPair {
        TokenizedPair::new(
            "t0",
            "en",
            premise.iter().map(|s| s.to_string()).collect(),
            hypothesis.iter().map(|s| s.to_string()).collect(),
            Label::Entailment,
        )
        .unwrap()
    }

    fn small_params(seed: u64) -> ModelParams {
        let vocab = Vocabulary::build(["cat", "dog", "bird", "fish", "runs", "sits"]);
        ModelParams::init(
            vocab,
            ModelDims {
                embedding: 4,
                hidden: 5,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_params_give_uniform_probabilities() {
        let mut p = small_params(0);
        p.embedding.iter_mut().for_each(|x| *x = 0.0);
        p.w1.iter_mut().for_each(|x| *x = 0.0);
        p.w2.iter_mut().for_each(|x| *x = 0.0);
        let trace = forward(&p, &toy_pair(&["cat"], &["dog"])).unwrap();
        for prob in &trace.probabilities {
            assert!((prob - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(trace.predicted_class, 0); // tie broken by lowest index
    }

    #[test]
    fn probabilities_normalize() {
        let p = small_params(3);
        let trace = forward(&p, &toy_pair(&["cat", "runs"], &["dog", "sits"])).unwrap();
        let sum: f64 = trace.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_word_equals_unk() {
        let p = small_params(5);
        let a = forward(&p, &toy_pair(&["cat", "zebra"], &["dog"])).unwrap();
        let b = forward(&p, &toy_pair(&["cat", UNK], &["dog"])).unwrap();
        assert_eq!(a.probabilities, b.probabilities);
    }

    #[test]
    fn forward_is_deterministic() {
        let p = small_params(7);
        let pair = toy_pair(&["cat"], &["cat"]);
        let a = forward(&p, &pair).unwrap();
        let b = forward(&p, &pair).unwrap();
        assert_eq!(a.probabilities, b.probabilities);
        assert_eq!(a.predicted_class, b.predicted_class);
    }

    #[test]
    fn output_values() {
        let trace = ForwardTrace {
            embeddings: vec![],
            premise_len: 0,
            premise_mean: vec![],
            hypothesis_mean: vec![],
            pre_activation: vec![],
            hidden: vec![],
            logits: vec![],
            probabilities: vec![0.2, 0.5, 0.3],
            predicted_class: 1,
        };
        let tp = output_value(&trace, OutputKind::TopPrediction, None).unwrap();
        assert!((tp - 0.5).abs() < 1e-15);
        let loss = output_value(&trace, OutputKind::Loss, Some(Label::Contradiction)).unwrap();
        assert!((loss - (-(0.3f64).ln())).abs() < 1e-12);
        assert!(output_value(&trace, OutputKind::Loss, None).is_err());

        let uniform = ForwardTrace {
            probabilities: vec![1.0 / 3.0; 3],
            ..trace
        };
        let loss = output_value(&uniform, OutputKind::Loss, Some(Label::Entailment)).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    /// Central-difference oracle for the embedding gradient.
    fn finite_difference(
        params: &ModelParams,
        embeddings: &[Vec<f64>],
        premise_len: usize,
        scalar: Scalar,
        step: f64,
    ) -> Vec<Vec<f64>> {
        let mut grads = Vec::with_capacity(embeddings.len());
        for pos in 0..embeddings.len() {
            let mut g = vec![0.0; embeddings[pos].len()];
            for k in 0..embeddings[pos].len() {
                let mut plus = embeddings.to_vec();
                plus[pos][k] += step;
                let mut minus = embeddings.to_vec();
                minus[pos][k] -= step;
                let fp = scalar
                    .value(&forward_embedded(params, plus, premise_len).unwrap())
                    .unwrap();
                let fm = scalar
                    .value(&forward_embedded(params, minus, premise_len).unwrap())
                    .unwrap();
                g[k] = (fp - fm) / (2.0 * step);
            }
            grads.push(g);
        }
        grads
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..6u64 {
            let p = small_params(seed);
            let pair = toy_pair(&["cat", "dog", "runs"], &["bird", "sits"]);
            let trace = forward(&p, &pair).unwrap();
            for scalar in [
                Scalar::ClassProbability(trace.predicted_class),
                Scalar::NegLogProbability(pair.label.index()),
            ] {
                let analytic = grad_from_trace(&p, &trace, scalar, GradMode::Plain).unwrap();
                let numeric =
                    finite_difference(&p, &trace.embeddings, trace.premise_len, scalar, 1e-5);
                for (ga, gn) in analytic.iter().zip(&numeric) {
                    for (a, n) in ga.iter().zip(gn) {
                        let tol = 1e-7f64.max(1e-4 * a.abs().max(n.abs()));
                        assert!((a - n).abs() <= tol, "analytic {a} vs numeric {n}");
                    }
                }
            }
        }
    }

    #[test]
    fn dead_relu_gives_zero_gradient() {
        let mut p = small_params(2);
        // Push every pre-activation negative.
        p.b1.iter_mut().for_each(|b| *b = -100.0);
        let pair = toy_pair(&["cat"], &["dog"]);
        for mode in [GradMode::Plain, GradMode::Guided] {
            let g = grad_wrt_embeddings(&p, &pair, OutputMechanism::TopPrediction, None, mode)
                .unwrap();
            for row in g {
                assert!(row.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn guided_nonzero_implies_plain_positive() {
        for seed in 0..8u64 {
            let p = small_params(seed + 100);
            let pair = toy_pair(&["cat", "fish"], &["dog", "runs"]);
            let plain =
                grad_wrt_embeddings(&p, &pair, OutputMechanism::TopPrediction, None, GradMode::Plain)
                    .unwrap();
            let guided = grad_wrt_embeddings(
                &p,
                &pair,
                OutputMechanism::TopPrediction,
                None,
                GradMode::Guided,
            )
            .unwrap();
            // Guided support check happens at ReLU nodes; at the embedding level
            // we verify guided gradients are never "new" where plain is zero for
            // an entirely inactive network.
            let plain_all_zero = plain.iter().all(|r| r.iter().all(|v| *v == 0.0));
            if plain_all_zero {
                assert!(guided.iter().all(|r| r.iter().all(|v| *v == 0.0)));
            }
        }
    }

    #[test]
    fn logit_shift_invariance() {
        let p = small_params(11);
        let pair = toy_pair(&["cat", "dog"], &["fish"]);
        let trace = forward(&p, &pair).unwrap();
        let shifted: Vec<f64> = trace.logits.iter().map(|l| l + 7.5).collect();
        let probs = softmax(&shifted);
        for (a, b) in probs.iter().zip(&trace.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(argmax_tie_lowest(&probs), trace.predicted_class);
    }

    #[test]
    fn train_zero_lr_keeps_params() {
        let p = small_params(13);
        let data = vec![
            toy_pair(&["cat"], &["cat"]),
            toy_pair(&["dog"], &["fish"]),
        ];
        let out = train(&p, &data, 3, 0.0, 9).unwrap();
        assert_eq!(out.params, p);
    }

    #[test]
    fn train_is_deterministic() {
        let p = small_params(17);
        let data: Vec<TokenizedPair> = (0..20)
            .map(|i| {
                let mut pair = toy_pair(&["cat", "dog"], &["bird"]);
                pair.id = format!("t{i}");
                pair.label = Label::from_index(i % 3).unwrap();
                pair
            })
            .collect();
        let a = train(&p, &data, 4, 0.1, 21).unwrap();
        let b = train(&p, &data, 4, 0.1, 21).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.final_accuracy, b.final_accuracy);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = small_params(23);
        let path = dir.path().join("model.json");
        p.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(p, loaded);
    }

    #[test]
    fn pad_row_is_zero() {
        let p = small_params(29);
        assert!(p.pad_embedding().iter().all(|v| *v == 0.0));
    }
}
