//! The attribution methods, parameterized by output mechanism and
//! aggregation.
//!
//! Methods are written against [`AttributionTarget`], a frozen scalar
//! function of the per-word input embeddings. [`ModelTarget`] binds it to
//! the built-in classifier; [`LinearTarget`] and [`AdditiveTarget`] are
//! analytic reference models used to verify the engines against closed-form
//! attributions.

mod gradient;
mod lime;
mod perturbation;

use serde::{Deserialize, Serialize};

use crate::data::{
    Aggregation, AttributionVector, Method, OutputMechanism, TokenizedPair,
};
use crate::error::{Error, Result};
use crate::model::{forward, forward_embedded, grad_embedded, GradMode, ModelParams, Scalar};
use crate::util::derived_seed;

pub use gradient::{
    guided_backprop_per_dim, input_x_gradient_per_dim, integrated_gradients_per_dim,
    saliency_per_dim,
};
pub use lime::lime_scores;
pub use perturbation::{occlusion_scores, shapley_from_permutations, shapley_scores};

/// Method, output, and aggregation choice plus the stochastic-method knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    pub method: Method,
    pub output_mechanism: OutputMechanism,
    pub aggregation: Aggregation,
    /// Riemann steps for integrated gradients.
    pub ig_steps: usize,
    /// Surrogate-model sample count for LIME.
    pub lime_samples: usize,
    /// Permutation sample count for Shapley value sampling.
    pub shapley_samples: usize,
    pub seed: u64,
}

impl AttributionConfig {
    pub fn new(method: Method, output_mechanism: OutputMechanism, aggregation: Aggregation) -> Self {
        AttributionConfig {
            method,
            output_mechanism,
            aggregation,
            ig_steps: 50,
            lime_samples: 50,
            shapley_samples: 25,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ig_steps < 1 {
            return Err(Error::InvalidConfig("ig_steps must be at least 1".into()));
        }
        if self.lime_samples < 1 || self.shapley_samples < 1 {
            return Err(Error::InvalidConfig("sample counts must be at least 1".into()));
        }
        let needs_none = self.method.is_per_word();
        let has_none = self.aggregation == Aggregation::None;
        if needs_none != has_none {
            return Err(Error::InvalidConfig(format!(
                "method {} requires aggregation {}",
                self.method.as_str(),
                if needs_none { "none" } else { "mean or l2" },
            )));
        }
        Ok(())
    }
}

/// A scalar function of per-word input embeddings with a fixed input point.
/// The differentiated/perturbed class is frozen when the target is built, so
/// the same function is evaluated at perturbed or interpolated inputs.
pub trait AttributionTarget {
    fn embedding_dim(&self) -> usize;
    fn premise_len(&self) -> usize;
    /// Embeddings of the instance under explanation, premise words first.
    fn input_embeddings(&self) -> &[Vec<f64>];
    /// Replacement/baseline embedding shared by all words.
    fn baseline_embedding(&self) -> &[f64];
    fn value(&self, embeddings: &[Vec<f64>]) -> Result<f64>;
    fn gradient(&self, embeddings: &[Vec<f64>], mode: GradMode) -> Result<Vec<Vec<f64>>>;

    fn word_count(&self) -> usize {
        self.input_embeddings().len()
    }

    /// Input with every word replaced by the baseline.
    fn baseline_input(&self) -> Vec<Vec<f64>> {
        vec![self.baseline_embedding().to_vec(); self.word_count()]
    }
}

/// [`AttributionTarget`] backed by the built-in classifier. The scalar is
/// the probability of the instance's own predicted class (`tp`) or the
/// cross-entropy against its gold label (`loss`); the baseline is the
/// `[PAD]` embedding.
pub struct ModelTarget<'a> {
    params: &'a ModelParams,
    premise_len: usize,
    scalar: Scalar,
    embeddings: Vec<Vec<f64>>,
    baseline: Vec<f64>,
}

impl<'a> ModelTarget<'a> {
    pub fn new(
        params: &'a ModelParams,
        pair: &TokenizedPair,
        mechanism: OutputMechanism,
    ) -> Result<Self> {
        let trace = forward(params, pair)?;
        let scalar = Scalar::freeze(mechanism, &trace, Some(pair.label))?;
        Ok(ModelTarget {
            params,
            premise_len: pair.premise_len(),
            scalar,
            embeddings: trace.embeddings,
            baseline: params.pad_embedding().to_vec(),
        })
    }
}

impl AttributionTarget for ModelTarget<'_> {
    fn embedding_dim(&self) -> usize {
        self.params.dims.embedding
    }

    fn premise_len(&self) -> usize {
        self.premise_len
    }

    fn input_embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    fn baseline_embedding(&self) -> &[f64] {
        &self.baseline
    }

    fn value(&self, embeddings: &[Vec<f64>]) -> Result<f64> {
        let trace = forward_embedded(self.params, embeddings.to_vec(), self.premise_len)?;
        self.scalar.value(&trace)
    }

    fn gradient(&self, embeddings: &[Vec<f64>], mode: GradMode) -> Result<Vec<Vec<f64>>> {
        grad_embedded(self.params, embeddings, self.premise_len, self.scalar, mode)
    }
}

/// Reference model that is exactly linear in the embeddings:
/// `f(u) = sum_j w_j . u_j`.
pub struct LinearTarget {
    pub weights: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
    pub premise_len: usize,
}

impl AttributionTarget for LinearTarget {
    fn embedding_dim(&self) -> usize {
        self.baseline.len()
    }

    fn premise_len(&self) -> usize {
        self.premise_len
    }

    fn input_embeddings(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    fn baseline_embedding(&self) -> &[f64] {
        &self.baseline
    }

    fn value(&self, embeddings: &[Vec<f64>]) -> Result<f64> {
        Ok(self
            .weights
            .iter()
            .zip(embeddings)
            .map(|(w, u)| w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .sum())
    }

    fn gradient(&self, _embeddings: &[Vec<f64>], _mode: GradMode) -> Result<Vec<Vec<f64>>> {
        Ok(self.weights.clone())
    }
}

/// Reference model additive in word *presence*: every word at its original
/// embedding contributes `contributions[j]`, every word at the baseline
/// contributes zero. Only defined on the perturbation lattice, so it has no
/// gradient.
pub struct AdditiveTarget {
    pub contributions: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
    pub premise_len: usize,
}

impl AttributionTarget for AdditiveTarget {
    fn embedding_dim(&self) -> usize {
        self.baseline.len()
    }

    fn premise_len(&self) -> usize {
        self.premise_len
    }

    fn input_embeddings(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    fn baseline_embedding(&self) -> &[f64] {
        &self.baseline
    }

    fn value(&self, embeddings: &[Vec<f64>]) -> Result<f64> {
        Ok(embeddings
            .iter()
            .zip(&self.contributions)
            .map(|(u, c)| if u[..] == self.baseline[..] { 0.0 } else { *c })
            .sum())
    }

    fn gradient(&self, _embeddings: &[Vec<f64>], _mode: GradMode) -> Result<Vec<Vec<f64>>> {
        Err(Error::InvalidInput(
            "presence-additive reference model has no gradient".into(),
        ))
    }
}

/// Collapses a word-major matrix of per-dimension scores to one score per
/// word: mean is `(1/d) sum_k u_jk`, L2 is `sqrt(sum_k u_jk^2)`.
pub fn aggregate(per_dim: &[Vec<f64>], kind: Aggregation) -> Result<Vec<f64>> {
    if per_dim.is_empty() || per_dim.iter().any(|row| row.is_empty()) {
        return Err(Error::InvalidInput("empty per-dimension matrix".into()));
    }
    match kind {
        Aggregation::Mean => Ok(per_dim
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()),
        Aggregation::L2 => Ok(per_dim
            .iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()),
        Aggregation::None => Err(Error::InvalidConfig(
            "aggregation kind must be mean or l2".into(),
        )),
    }
}

fn finish(
    pair: &TokenizedPair,
    config: &AttributionConfig,
    method: Method,
    scores: Vec<f64>,
) -> Result<AttributionVector> {
    let v = AttributionVector {
        instance_id: pair.id.clone(),
        language: pair.language.clone(),
        method,
        output_mechanism: config.output_mechanism,
        aggregation: config.aggregation,
        scores,
    };
    v.validate_against(pair)?;
    Ok(v)
}

/// Absolute gradient per dimension, aggregated.
pub fn saliency(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    let per_dim = saliency_per_dim(&target)?;
    finish(pair, config, Method::Saliency, aggregate(&per_dim, config.aggregation)?)
}

/// Gradient times input per dimension, aggregated.
pub fn input_x_gradient(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    let per_dim = input_x_gradient_per_dim(&target)?;
    finish(pair, config, Method::InputXGradient, aggregate(&per_dim, config.aggregation)?)
}

/// Signed gradient with the guided ReLU override, aggregated.
pub fn guided_backprop(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    let per_dim = guided_backprop_per_dim(&target)?;
    finish(pair, config, Method::GuidedBackprop, aggregate(&per_dim, config.aggregation)?)
}

/// Riemann-sum path integral of gradients from the `[PAD]` baseline,
/// aggregated.
pub fn integrated_gradients(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    let per_dim = integrated_gradients_per_dim(&target, config.ig_steps)?;
    finish(pair, config, Method::IntegratedGradients, aggregate(&per_dim, config.aggregation)?)
}

/// Surrogate ridge-regression coefficients on word-presence vectors.
pub fn lime(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    let seed = derived_seed(config.seed, &pair.id);
    let scores = lime_scores(&target, config.lime_samples, seed)?;
    finish(pair, config, Method::Lime, scores)
}

/// Output drop when one word's embedding is replaced by the baseline.
pub fn occlusion(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    finish(pair, config, Method::Occlusion, occlusion_scores(&target)?)
}

/// Average marginal contribution over sampled word permutations.
pub fn shapley_sampling(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let target = ModelTarget::new(params, pair, config.output_mechanism)?;
    let seed = derived_seed(config.seed, &pair.id);
    let scores = shapley_scores(&target, config.shapley_samples, seed)?;
    finish(pair, config, Method::ShapleySampling, scores)
}

/// Raw embedding activations, aggregated. Independent of the output
/// mechanism and gold label.
pub fn layer_activation(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    let per_dim = params.embed_pair(pair);
    finish(pair, config, Method::Activation, aggregate(&per_dim, config.aggregation)?)
}

/// Dispatches on `config.method`, applying output mechanism and
/// aggregation. Special positions are never attributed: scores cover the
/// non-special word positions only.
pub fn attribute(
    params: &ModelParams,
    pair: &TokenizedPair,
    config: &AttributionConfig,
) -> Result<AttributionVector> {
    config.validate()?;
    match config.method {
        Method::Saliency => saliency(params, pair, config),
        Method::InputXGradient => input_x_gradient(params, pair, config),
        Method::GuidedBackprop => guided_backprop(params, pair, config),
        Method::IntegratedGradients => integrated_gradients(params, pair, config),
        Method::Lime => lime(params, pair, config),
        Method::Occlusion => occlusion(params, pair, config),
        Method::ShapleySampling => shapley_sampling(params, pair, config),
        Method::Activation => layer_activation(params, pair, config),
    }
}

/// The 13 method/aggregation rows of the standard comparison grid: the five
/// per-dimension methods under mean and L2, and the three per-word methods.
pub fn standard_grid() -> Vec<(Method, Aggregation)> {
    let mut grid = Vec::new();
    for method in [
        Method::Saliency,
        Method::InputXGradient,
        Method::GuidedBackprop,
        Method::IntegratedGradients,
        Method::Activation,
    ] {
        grid.push((method, Aggregation::Mean));
        grid.push((method, Aggregation::L2));
    }
    for method in [Method::Lime, Method::Occlusion, Method::ShapleySampling] {
        grid.push((method, Aggregation::None));
    }
    grid
}
