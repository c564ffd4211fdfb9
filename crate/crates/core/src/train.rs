//! Objectives and gradient-descent training for the built-in predictors.
//!
//! The data term of each objective is the mean cross-entropy over prediction
//! points: binary cross-entropy per change point for single and multiple
//! prediction, and categorical cross-entropy per sentence position for the
//! speaker head. An L2 penalty `l2 / 2 * |w|^2` is added for optimization
//! and reported separately.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Featurizer};
use crate::model::{sigmoid, softmax_distribution, LinearModel, SoftmaxModel};
use crate::transcript::{derive_change_sequence, Conversation, Sentence};
use crate::windowing::{build_spm_contexts, SpmContext, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 300,
            l2: 1e-4,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Data loss before the first update.
    pub initial_loss: f64,
    /// Data loss after training, without the L2 term.
    pub loss: f64,
    pub regularized_loss: f64,
    /// Number of prediction points the loss is averaged over.
    pub normalizer: usize,
    pub epochs: usize,
}

/// A differentiable training objective over a flat parameter vector.
pub trait Objective {
    fn param_len(&self) -> usize;
    fn example_count(&self) -> usize;
    /// Mean data loss over the examples in `subset`.
    fn data_loss_on(&self, params: &[f64], subset: &[usize]) -> f64;
    /// Gradient of the mean data loss over `subset`, accumulated into `out`.
    fn data_gradient_on(&self, params: &[f64], subset: &[usize], out: &mut [f64]);
    fn l2(&self) -> f64;

    fn data_loss(&self, params: &[f64]) -> f64 {
        self.data_loss_on(params, &all(self.example_count()))
    }

    fn loss(&self, params: &[f64]) -> f64 {
        let sq: f64 = params.iter().map(|w| w * w).sum();
        self.data_loss(params) + 0.5 * self.l2() * sq
    }
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Analytic gradient of the full regularized objective.
pub fn gradient<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Vec<f64> {
    gradient_on(objective, params, &all(objective.example_count()))
}

fn gradient_on<O: Objective + ?Sized>(objective: &O, params: &[f64], subset: &[usize]) -> Vec<f64> {
    let l2 = objective.l2();
    let mut g: Vec<f64> = params.iter().map(|w| l2 * w).collect();
    objective.data_gradient_on(params, subset, &mut g);
    g
}

/// Numerically stable `-[y ln sigmoid(z) + (1 - y) ln(1 - sigmoid(z))]`.
pub fn bce_with_logit(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if y {
        softplus - z
    } else {
        softplus
    }
}

/// Binary change labels over feature vectors.
#[derive(Debug, Clone, Default)]
pub struct BinaryBatch {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<bool>,
}

impl BinaryBatch {
    pub fn push(&mut self, x: FeatureVector, y: bool) {
        self.features.push(x);
        self.labels.push(y);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub struct BinaryObjective<'a> {
    pub batch: &'a BinaryBatch,
    pub dim: usize,
    pub l2: f64,
}

impl Objective for BinaryObjective<'_> {
    fn param_len(&self) -> usize {
        self.dim
    }

    fn example_count(&self) -> usize {
        self.batch.len()
    }

    fn l2(&self) -> f64 {
        self.l2
    }

    fn data_loss_on(&self, params: &[f64], subset: &[usize]) -> f64 {
        let total: f64 = subset
            .iter()
            .map(|&i| bce_with_logit(self.batch.features[i].dot(params), self.batch.labels[i]))
            .sum();
        total / subset.len() as f64
    }

    fn data_gradient_on(&self, params: &[f64], subset: &[usize], out: &mut [f64]) {
        let scale = 1.0 / subset.len() as f64;
        for &i in subset {
            let x = &self.batch.features[i];
            let y = if self.batch.labels[i] { 1.0 } else { 0.0 };
            x.add_scaled_to(out, scale * (sigmoid(x.dot(params)) - y));
        }
    }
}

/// Per-position speaker labels over feature vectors.
#[derive(Debug, Clone)]
pub struct SoftmaxBatch {
    pub classes: usize,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
}

impl SoftmaxBatch {
    pub fn new(classes: usize) -> Self {
        SoftmaxBatch {
            classes,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, x: FeatureVector, label: usize) -> Result<()> {
        if label >= self.classes {
            return Err(Error::validation(format!(
                "speaker label index {label} out of range for {} speakers",
                self.classes
            )));
        }
        self.features.push(x);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub struct SoftmaxObjective<'a> {
    pub batch: &'a SoftmaxBatch,
    pub dim: usize,
    pub l2: f64,
}

impl Objective for SoftmaxObjective<'_> {
    fn param_len(&self) -> usize {
        self.dim * self.batch.classes
    }

    fn example_count(&self) -> usize {
        self.batch.len()
    }

    fn l2(&self) -> f64 {
        self.l2
    }

    fn data_loss_on(&self, params: &[f64], subset: &[usize]) -> f64 {
        let total: f64 = subset
            .iter()
            .map(|&i| {
                let probs = softmax_distribution(params, self.dim, self.batch.classes, &self.batch.features[i]);
                -probs[self.batch.labels[i]].ln()
            })
            .sum();
        total / subset.len() as f64
    }

    fn data_gradient_on(&self, params: &[f64], subset: &[usize], out: &mut [f64]) {
        let scale = 1.0 / subset.len() as f64;
        for &i in subset {
            let x = &self.batch.features[i];
            let probs = softmax_distribution(params, self.dim, self.batch.classes, x);
            for (c, p) in probs.iter().enumerate() {
                let target = if c == self.batch.labels[i] { 1.0 } else { 0.0 };
                x.add_scaled_to(&mut out[c * self.dim..(c + 1) * self.dim], scale * (p - target));
            }
        }
    }
}

/// Fixed-rate gradient descent on `params`, full-batch or shuffled
/// mini-batches depending on `config.batch_size`.
pub fn descend<O: Objective + ?Sized>(objective: &O, params: &mut [f64], config: &TrainConfig) -> Result<TrainReport> {
    let n = objective.example_count();
    if n == 0 {
        return Err(Error::validation("training data is empty"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::config("learning rate must be positive"));
    }
    if config.l2 < 0.0 {
        return Err(Error::config("l2 must be non-negative"));
    }
    let initial_loss = objective.data_loss(params);
    let mut order = all(n);
    let batch = config.batch_size.unwrap_or(n).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let g = gradient_on(objective, params, chunk);
            for (w, gi) in params.iter_mut().zip(&g) {
                *w -= config.learning_rate * gi;
            }
        }
    }
    let loss = objective.data_loss(params);
    Ok(TrainReport {
        initial_loss,
        loss,
        regularized_loss: objective.loss(params),
        normalizer: n,
        epochs: config.epochs,
    })
}

/// One multi-point training window: sentences and the change label of each
/// internal boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct MpmExample {
    pub sentences: Vec<Sentence>,
    pub labels: Vec<bool>,
}

/// One speaker-labeling window: sentences and a window-local label index per
/// sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerExample {
    pub sentences: Vec<Sentence>,
    pub labels: Vec<usize>,
}

pub fn spm_batch(featurizer: &Featurizer, data: &[(SpmContext, bool)]) -> BinaryBatch {
    let mut batch = BinaryBatch::default();
    for (ctx, y) in data {
        batch.push(featurizer.featurize(ctx.left(), ctx.right(), &ctx.sentences), *y);
    }
    batch
}

pub fn mpm_batch(featurizer: &Featurizer, data: &[MpmExample]) -> Result<BinaryBatch> {
    let mut batch = BinaryBatch::default();
    for ex in data {
        if ex.sentences.len() < 2 || ex.labels.len() != ex.sentences.len() - 1 {
            return Err(Error::validation(format!(
                "window of {} sentences needs {} labels, got {}",
                ex.sentences.len(),
                ex.sentences.len().saturating_sub(1),
                ex.labels.len()
            )));
        }
        for (i, &y) in ex.labels.iter().enumerate() {
            batch.push(featurizer.featurize(&ex.sentences[i], &ex.sentences[i + 1], &ex.sentences), y);
        }
    }
    Ok(batch)
}

pub fn speaker_batch(featurizer: &Featurizer, data: &[SpeakerExample], classes: usize) -> Result<SoftmaxBatch> {
    let mut batch = SoftmaxBatch::new(classes);
    for ex in data {
        if ex.labels.len() != ex.sentences.len() {
            return Err(Error::validation(format!(
                "window of {} sentences has {} labels",
                ex.sentences.len(),
                ex.labels.len()
            )));
        }
        for (i, &label) in ex.labels.iter().enumerate() {
            batch.push(featurizer.featurize_position(&ex.sentences, i), label)?;
        }
    }
    Ok(batch)
}

/// Trains the single-prediction baseline on labeled contexts.
pub fn train_baseline_spm(
    data: &[(SpmContext, bool)],
    featurizer: Featurizer,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainReport)> {
    let batch = spm_batch(&featurizer, data);
    let mut model = LinearModel::zeros(featurizer);
    let objective = BinaryObjective {
        batch: &batch,
        dim: featurizer.dim(),
        l2: config.l2,
    };
    let report = descend(&objective, &mut model.weights, config)?;
    Ok((model, report))
}

/// Trains the multi-prediction baseline; the loss is averaged over all
/// boundary predictions of all windows.
pub fn train_baseline_mpm(
    data: &[MpmExample],
    featurizer: Featurizer,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainReport)> {
    let batch = mpm_batch(&featurizer, data)?;
    let mut model = LinearModel::zeros(featurizer);
    let objective = BinaryObjective {
        batch: &batch,
        dim: featurizer.dim(),
        l2: config.l2,
    };
    let report = descend(&objective, &mut model.weights, config)?;
    Ok((model, report))
}

/// Trains the per-sentence speaker head over `classes` labels; the loss is
/// averaged over all sentence positions of all windows.
pub fn train_baseline_multispeaker(
    data: &[SpeakerExample],
    classes: usize,
    featurizer: Featurizer,
    config: &TrainConfig,
) -> Result<(SoftmaxModel, TrainReport)> {
    if classes < 2 {
        return Err(Error::config("multi-speaker training needs at least 2 speakers"));
    }
    let batch = speaker_batch(&featurizer, data, classes)?;
    let mut model = SoftmaxModel::zeros(featurizer, classes);
    let objective = SoftmaxObjective {
        batch: &batch,
        dim: featurizer.dim(),
        l2: config.l2,
    };
    let report = descend(&objective, &mut model.weights, config)?;
    Ok((model, report))
}

/// Labeled contexts for every change point of every conversation.
pub fn spm_examples(convs: &[Conversation], h: usize, k: usize) -> Result<Vec<(SpmContext, bool)>> {
    let mut out = Vec::new();
    for conv in convs {
        let gold = derive_change_sequence(&conv.require_gold()?);
        for ctx in build_spm_contexts(conv, h, k)? {
            let y = gold.decisions[ctx.change_index];
            out.push((ctx, y));
        }
    }
    Ok(out)
}

pub fn mpm_examples(convs: &[Conversation], window_len: usize, stride: usize) -> Result<Vec<MpmExample>> {
    let mut out = Vec::new();
    for conv in convs {
        let gold = derive_change_sequence(&conv.require_gold()?);
        let ws = WindowSet::new(conv.len(), window_len, stride)?;
        for w in &ws.windows {
            out.push(MpmExample {
                sentences: w.sentences(conv).to_vec(),
                labels: gold.decisions[w.span.start..w.span.end - 1].to_vec(),
            });
        }
    }
    Ok(out)
}

/// Windows labeled in window-local speaker space: the first speaker to talk
/// in a window is label 0, the next new speaker label 1, and so on.
pub fn speaker_examples(
    convs: &[Conversation],
    window_len: usize,
    stride: usize,
    classes: usize,
) -> Result<Vec<SpeakerExample>> {
    let mut out = Vec::new();
    for conv in convs {
        let gold = conv.require_gold()?;
        let ws = WindowSet::new(conv.len(), window_len, stride)?;
        for w in &ws.windows {
            let mut seen: Vec<&str> = Vec::new();
            let mut labels = Vec::with_capacity(w.len());
            for label in &gold.labels[w.span.clone()] {
                let idx = match seen.iter().position(|s| s == label) {
                    Some(i) => i,
                    None => {
                        seen.push(label);
                        seen.len() - 1
                    }
                };
                if idx >= classes {
                    return Err(Error::validation(format!(
                        "conversation {}: window {} has more than {classes} speakers",
                        conv.id, w.window_index
                    )));
                }
                labels.push(idx);
            }
            out.push(SpeakerExample {
                sentences: w.sentences(conv).to_vec(),
                labels,
            });
        }
    }
    Ok(out)
}
