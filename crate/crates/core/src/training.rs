//! Losses, learning-rate schedule and the shared training loop.

use std::time::Instant;

use egopose_nn::gradcheck::{check_gradients, GradCheckReport, Selection};
use egopose_nn::optim::AdamW;
use egopose_nn::{ParamStore, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::NUM_CLASSES;
use crate::pose::Pose3D;

/// Mean Euclidean distance between matching rows of two `(batch·K)×3` tapes
/// values.
pub fn mpjpe_loss(tape: &mut Tape<'_>, pred: Var, gt: Var) -> Result<Var> {
    let (ps, gs) = (tape.shape(pred), tape.shape(gt));
    if ps != gs || ps.1 != 3 {
        return Err(Error::Shape(format!("mpjpe_loss: {ps:?} vs {gs:?}")));
    }
    let d = tape.sub(pred, gt);
    Ok(tape.row_norm_mean(d))
}

fn stack(poses: &[Pose3D]) -> Tensor {
    let k = poses.first().map_or(0, |p| p.num_joints());
    Tensor::from_vec(poses.len() * k, 3, poses.iter().flat_map(|p| p.flat()).collect())
}

/// [`mpjpe_loss`] on pose lists; poses must pairwise share skeleton and unit.
pub fn mpjpe_loss_value(pred: &[Pose3D], gt: &[Pose3D]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (p, g) in pred.iter().zip(gt) {
        p.check_compatible(g)
            .map_err(|e| Error::Shape(e.to_string()))?;
    }
    if pred.iter().any(|p| p.num_joints() != pred[0].num_joints()) {
        return Err(Error::Shape("batch mixes joint counts".into()));
    }
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let p = tape.constant(stack(pred));
    let g = tape.constant(stack(gt));
    let l = mpjpe_loss(&mut tape, p, g)?;
    Ok(tape.value(l).item())
}

fn check_labels(labels: &[i64]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&l| {
            if (0..NUM_CLASSES as i64).contains(&l) {
                Ok(l as usize)
            } else {
                Err(Error::Label(l))
            }
        })
        .collect()
}

/// Mean negative log-softmax of the true class over a `batch×4` logit tape
/// value.
pub fn cross_entropy_loss(tape: &mut Tape<'_>, logits: Var, labels: &[i64]) -> Result<Var> {
    let labels = check_labels(labels)?;
    let (rows, cols) = tape.shape(logits);
    if rows != labels.len() || cols != NUM_CLASSES {
        return Err(Error::Shape(format!("logits {rows}x{cols} for {} labels", labels.len())));
    }
    Ok(tape.cross_entropy(logits, &labels))
}

pub fn cross_entropy_value(logits: &[[f64; NUM_CLASSES]], labels: &[i64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let l = tape.constant(Tensor::from_vec(logits.len(), NUM_CLASSES, logits.iter().flatten().copied().collect()));
    let loss = cross_entropy_loss(&mut tape, l, labels)?;
    Ok(tape.value(loss).item())
}

/// `base_lr · ½(1 + cos(π·step/total_steps))`.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Range(format!("step {step} outside [0, {total_steps}]")));
    }
    if step == total_steps {
        return Ok(0.0);
    }
    let t = step as f64 / total_steps as f64;
    Ok((base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Precision {
    /// Parameters are rounded to `f32` after every update.
    #[serde(rename = "32")]
    F32,
    #[default]
    #[serde(rename = "64")]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub epochs: usize,
    /// Stops after this many updates, overriding `epochs`.
    pub max_steps: Option<usize>,
    pub weight_decay: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Validate every this many epochs (and always after the last one).
    pub val_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            base_lr: 1e-4,
            epochs: 10,
            max_steps: None,
            weight_decay: 0.01,
            seed: 0,
            precision: Precision::F64,
            val_every: 1,
        }
    }
}

impl TrainConfig {
    /// Full-scale hand recipe: batch 64, 70 epochs.
    pub fn full_scale() -> Self {
        Self {
            batch_size: 64,
            epochs: 70,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.val_every == 0 || (self.epochs == 0 && self.max_steps.is_none()) {
            return Err(Error::InvalidInput("batch_size, epochs and val_every must be positive".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidInput("base_lr must be positive and weight_decay nonnegative".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.max_steps.unwrap_or(self.epochs * self.steps_per_epoch(n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Updates completed at the end of this epoch.
    pub steps: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub metric: String,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_metric: Option<f64>,
    /// Excluded from serialization so reruns produce identical files.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    /// `step,lr,loss` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,loss\n");
        for s in &self.steps {
            out.push_str(&format!("{},{:.16e},{:.16e}\n", s.step, s.lr, s.loss));
        }
        out
    }
}

/// A model the training loop can optimize.
pub trait Trainable {
    type Sample;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Scalar loss of a mini-batch, built on `tape`. Parameters must be read
    /// through the tape, never from `self.params()` directly.
    fn batch_loss(&self, tape: &mut Tape<'_>, batch: &[&Self::Sample]) -> Result<Var>;
    /// Validation metric; lower is better.
    fn validation_metric(&self, samples: &[Self::Sample]) -> Result<f64>;
    fn metric_name(&self) -> &'static str;
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Parameters at the best validation epoch.
    pub best: ParamStore,
}

fn round_to_f32(store: &mut ParamStore) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

/// Runs AdamW with a cosine schedule over seeded shuffles of `train`.
///
/// The model is left holding the final parameters; the best-validation
/// parameters are returned alongside the history. `on_epoch` sees each
/// finished epoch record.
pub fn train<M: Trainable>(
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput);
    }
    let start = Instant::now();
    let total = config.total_steps(train.len());
    let per_epoch = config.steps_per_epoch(train.len());
    let epochs = total.div_ceil(per_epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(config.weight_decay);
    if config.precision == Precision::F32 {
        round_to_f32(model.params_mut());
    }
    let mut history = TrainHistory {
        metric: model.metric_name().to_string(),
        steps: Vec::with_capacity(total),
        epochs: Vec::with_capacity(epochs),
        best_epoch: None,
        best_val_metric: None,
        wall_clock_s: 0.0,
    };
    let mut best = model.params().clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            if step == total {
                break;
            }
            let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let lr = cosine_lr(step, total, config.base_lr)?;
            let (loss, grads) = {
                let mut tape = Tape::new(model.params());
                let l = model.batch_loss(&mut tape, &batch)?;
                (tape.value(l).item(), tape.backward(l))
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            opt.step(model.params_mut(), &grads, lr);
            if config.precision == Precision::F32 {
                round_to_f32(model.params_mut());
            }
            history.steps.push(StepRecord { step, epoch, lr, loss });
            loss_sum += loss;
            batches += 1;
            step += 1;
        }
        let last = epoch + 1 == epochs;
        let val_metric = if last || (epoch + 1) % config.val_every == 0 {
            let v = model.validation_metric(val)?;
            if !v.is_finite() {
                return Err(Error::Divergence {
                    step,
                    loss: v,
                });
            }
            if history.best_val_metric.is_none_or(|b| v < b) {
                history.best_val_metric = Some(v);
                history.best_epoch = Some(epoch);
                best.copy_from(model.params());
            }
            Some(v)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            steps: step,
            train_loss: loss_sum / batches.max(1) as f64,
            val_metric,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    history.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(TrainOutcome { history, best })
}

/// Finite-difference check of `model`'s loss gradient on one batch.
pub fn grad_check<M: Trainable>(
    model: &M,
    batch: &[&M::Sample],
    epsilon: f64,
    selection: Selection,
) -> Result<GradCheckReport> {
    let (grads, mut store) = {
        let mut tape = Tape::new(model.params());
        let l = model.batch_loss(&mut tape, batch)?;
        (tape.backward(l), model.params().clone())
    };
    let mut failure = None;
    let report = check_gradients(
        &mut store,
        &grads,
        |s| {
            let mut tape = Tape::new(s);
            match model.batch_loss(&mut tape, batch) {
                Ok(l) => tape.value(l).item(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        epsilon,
        selection,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-4).unwrap(), 1e-4);
        assert_eq!(cosine_lr(100, 100, 1e-4).unwrap(), 0.0);
        assert!((cosine_lr(50, 100, 1e-4).unwrap() - 5e-5).abs() < 1e-12);
        assert!(matches!(cosine_lr(101, 100, 1e-4), Err(Error::Range(_))));
        assert!(matches!(cosine_lr(0, 0, 1e-4), Err(Error::Range(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = cross_entropy_value(&[[0.0; 4]], &[2]).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-12);
        let sat = cross_entropy_value(&[[1e6, 0.0, 0.0, 0.0]], &[0]).unwrap();
        assert!(sat.abs() < 1e-12);
        assert!(matches!(cross_entropy_value(&[[0.0; 4]], &[4]), Err(Error::Label(4))));
    }
}
