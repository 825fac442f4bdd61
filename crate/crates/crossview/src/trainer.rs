//! Two-phase training: per-view classification pretraining, then a joint
//! loop where each projection follows the gradient of
//! `(1-lambda)*classification + lambda*alignment` while the classifiers
//! receive only the `(1-lambda)`-scaled classification gradient.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ViewModel;
use crate::nn::{sgd_step, LrSchedule, ParamSet};
use crate::objective::{
    alignment_relaxed, check_lambda, multilabel_bce, total_loss, LabelMatrix, LossReport,
};
use crate::tensor::Tensor;

/// Total loss above this aborts training as divergent.
const LOSS_CEILING: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Image,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub pretrain_rate: LrSchedule,
    pub joint_rate: LrSchedule,
    pub batch_size: usize,
    pub pretrain_iters_image: u64,
    pub pretrain_iters_text: u64,
    pub joint_iters: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk(0.2, 0)
    }
}

impl TrainConfig {
    /// Full-scale reference schedule: 10k/2k pretraining iterations, 10k
    /// joint iterations, batches of 64, 2e-4 constant pretraining rate and
    /// 1e-4 joint rate decayed by 0.9 every 1000 steps.
    pub fn full_scale(lambda: f64, seed: u64) -> Self {
        Self {
            lambda,
            pretrain_rate: LrSchedule::constant(2e-4),
            joint_rate: LrSchedule { base_rate: 1e-4, decay_factor: 0.9, decay_every: 1000 },
            batch_size: 64,
            pretrain_iters_image: 10_000,
            pretrain_iters_text: 2_000,
            joint_iters: 10_000,
            seed,
        }
    }

    /// Scaled-down schedule sized for corpora of a few thousand instances.
    pub fn desk(lambda: f64, seed: u64) -> Self {
        Self {
            lambda,
            pretrain_rate: LrSchedule::constant(0.5),
            joint_rate: LrSchedule { base_rate: 0.5, decay_factor: 0.9, decay_every: 300 },
            batch_size: 64,
            pretrain_iters_image: 600,
            pretrain_iters_text: 600,
            joint_iters: 1200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        self.pretrain_rate.validate()?;
        self.joint_rate.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Paired instances held in memory: per row one feature vector, one
/// concatenated word-embedding vector, and at least one category label.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    ids: Vec<u64>,
    features: Tensor,
    text_vectors: Tensor,
    labels: LabelMatrix,
}

impl TrainingSet {
    pub fn new(
        ids: Vec<u64>,
        features: Tensor,
        text_vectors: Tensor,
        labels: LabelMatrix,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Contract("training set must contain at least one instance".into()));
        }
        if features.rows() != n || text_vectors.rows() != n || labels.n() != n {
            return Err(Error::Dimension {
                op: "training_set",
                detail: format!(
                    "row counts disagree: {} ids, {} feature rows, {} text rows, {} label rows",
                    n,
                    features.rows(),
                    text_vectors.rows(),
                    labels.n()
                ),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { ids, features, text_vectors, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn text_vectors(&self) -> &Tensor {
        &self.text_vectors
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn text_dim(&self) -> usize {
        self.text_vectors.cols()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        Ok(Batch {
            features: self.features.gather_rows(indices),
            text_vectors: self.text_vectors.gather_rows(indices),
            labels: self.labels.gather(indices),
        })
    }
}

/// One mini-batch with both views and labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Tensor,
    pub text_vectors: Tensor,
    pub labels: LabelMatrix,
}

/// Without-replacement sampler: a fresh shuffle each time fewer than a full
/// batch of indices remain, so every batch is full and no index repeats
/// within an epoch.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract("cannot sample from an empty set".into()));
        }
        if batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Ok(Self { order, cursor: 0, batch_size: batch_size.min(n), rng })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch_size;
        &self.order[start..self.cursor]
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub iteration: u64,
    pub image: ViewModel,
    pub text: ViewModel,
    pub pretrain_history_image: Vec<f64>,
    pub pretrain_history_text: Vec<f64>,
    pub history: Vec<LossReport>,
}

/// Splitmix-style stream separation so each phase draws an independent
/// shuffle sequence from the one configured seed.
fn sampler_seed(seed: u64, phase: u64) -> u64 {
    seed ^ phase.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn guard_divergence(iteration: u64, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > LOSS_CEILING {
        return Err(Error::Divergence { iteration, loss });
    }
    Ok(())
}

fn add_scaled(target: &mut Tensor, source: &Tensor, scale: f64) {
    debug_assert_eq!(target.shape(), source.shape());
    for (t, s) in target.data_mut().iter_mut().zip(source.data()) {
        *t += s * scale;
    }
}

/// Classification-only SGD on one view. Returns the per-iteration loss
/// history; the model's parameters and BN statistics are updated in place.
pub fn pretrain_view(
    model: &mut ViewModel,
    view: View,
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let (iters, phase) = match view {
        View::Image => (config.pretrain_iters_image, 1),
        View::Text => (config.pretrain_iters_text, 2),
    };
    let mut sampler = BatchSampler::new(set.len(), config.batch_size, sampler_seed(config.seed, phase))?;
    let mut history = Vec::with_capacity(iters as usize);
    for it in 0..iters {
        let indices = sampler.next_batch().to_vec();
        let batch = set.batch(&indices)?;
        let x = match view {
            View::Image => &batch.features,
            View::Text => &batch.text_vectors,
        };
        let (z, trace) = model.projection.forward_train(x, &model.params)?;
        let (logits, clf_grad) = model.classifier.classify_grad(&z, &model.params)?;
        let (loss, dlogits) = multilabel_bce(&logits, &batch.labels)?;
        guard_divergence(it, loss)?;
        let (dz, dw) = clf_grad.backward(&dlogits)?;
        model.params.accumulate("clf.w", &dw, 1.0)?;
        model.projection.backward(&trace, &dz, &mut model.params)?;
        sgd_step(&mut model.params, &config.pretrain_rate, it, 1.0)?;
        history.push(loss);
    }
    Ok(history)
}

/// One shared forward pass, then gradient accumulation for both views:
/// each projection gets `(1-lambda)*dL + lambda*dJ` through its code, each
/// classifier gets `(1-lambda)*dL` (skipped entirely at lambda = 1 so the
/// weights stay bit-identical under the zero-step guard).
pub fn compute_joint_gradients(
    image: &mut ViewModel,
    text: &mut ViewModel,
    batch: &Batch,
    lambda: f64,
) -> Result<LossReport> {
    check_lambda(lambda)?;
    let (z_image, trace_image) = image.projection.forward_train(&batch.features, &image.params)?;
    let (z_text, trace_text) = text.projection.forward_train(&batch.text_vectors, &text.params)?;

    let (logits_image, clf_grad_image) = image.classifier.classify_grad(&z_image, &image.params)?;
    let (logits_text, clf_grad_text) = text.classifier.classify_grad(&z_text, &text.params)?;
    let (l_image, dlogits_image) = multilabel_bce(&logits_image, &batch.labels)?;
    let (l_text, dlogits_text) = multilabel_bce(&logits_text, &batch.labels)?;
    let (j_align, dz_align_image, dz_align_text) = alignment_relaxed(&z_image, &z_text)?;
    let report = total_loss(l_image, l_text, j_align, lambda)?;

    let clf_scale = 1.0 - lambda;
    let mut dz_image = dz_align_image.map(|v| v * lambda);
    let mut dz_text = dz_align_text.map(|v| v * lambda);
    if clf_scale != 0.0 {
        let (dz_clf, dw) = clf_grad_image.backward(&dlogits_image)?;
        image.params.accumulate("clf.w", &dw, clf_scale)?;
        add_scaled(&mut dz_image, &dz_clf, clf_scale);
        let (dz_clf, dw) = clf_grad_text.backward(&dlogits_text)?;
        text.params.accumulate("clf.w", &dw, clf_scale)?;
        add_scaled(&mut dz_text, &dz_clf, clf_scale);
    }
    image.projection.backward(&trace_image, &dz_image, &mut image.params)?;
    text.projection.backward(&trace_text, &dz_text, &mut text.params)?;
    Ok(report)
}

/// One simultaneous update of both views from a shared forward pass.
pub fn joint_step(state: &mut TrainState, batch: &Batch, config: &TrainConfig) -> Result<LossReport> {
    let report = compute_joint_gradients(&mut state.image, &mut state.text, batch, config.lambda)?;
    guard_divergence(state.iteration, report.total)?;
    sgd_step(&mut state.image.params, &config.joint_rate, state.iteration, 1.0)?;
    sgd_step(&mut state.text.params, &config.joint_rate, state.iteration, 1.0)?;
    state.iteration += 1;
    state.history.push(report);
    Ok(report)
}

/// Pretrain both views, then run the joint loop. Deterministic given the
/// models' initialization and `config.seed`.
pub fn train(
    image: ViewModel,
    text: ViewModel,
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<TrainState> {
    config.validate()?;
    let mut image = image;
    let mut text = text;
    let pretrain_history_image = pretrain_view(&mut image, View::Image, set, config)?;
    let pretrain_history_text = pretrain_view(&mut text, View::Text, set, config)?;
    let mut state = TrainState {
        iteration: 0,
        image,
        text,
        pretrain_history_image,
        pretrain_history_text,
        history: Vec::new(),
    };
    let mut sampler = BatchSampler::new(set.len(), config.batch_size, sampler_seed(config.seed, 3))?;
    for _ in 0..config.joint_iters {
        let indices = sampler.next_batch().to_vec();
        let batch = set.batch(&indices)?;
        joint_step(&mut state, &batch, config)?;
    }
    Ok(state)
}

/// Bitwise parameter comparison, used to assert exact invariants.
pub fn params_identical(a: &ParamSet, b: &ParamSet) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b.iter()).all(|(ea, eb)| {
        ea.name == eb.name
            && ea.value.shape() == eb.value.shape()
            && ea
                .value
                .data()
                .iter()
                .zip(eb.value.data())
                .all(|(x, y)| x.to_bits() == y.to_bits())
    })
}
