use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gradcheck::check_gradient;
use super::loss::loss;
use super::model::PdNetModel;
use super::network::{forward, loss_and_gradient, predict};
use super::optim::{cosine_annealing, Adam, AdamParams};
use crate::augment::{
    artificial_alias, artificial_alias_forced, balanced_batches, can_force_alias, geometric_augment, AugmentConfig,
    BatchEntry, BatchItem,
};
use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::eval::{classification_metrics, cosine_similarity};
use crate::field::{make_model_input, DopplerFrame, LabelMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Verify a sample of gradients against finite differences before the
    /// first update.
    pub gradient_check: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 0.001,
            seed: 0,
            augment: AugmentConfig { enable_artificial_aliasing: false, ..AugmentConfig::default() },
            gradient_check: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be finite and >= 0", self.learning_rate)));
        }
        self.augment.validate()
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub model: PdNetModel<T>,
    pub adam: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: PdNetModel<T>) -> Self {
        let adam = Adam::new(model.param_count(), AdamParams::default());
        TrainState { model, adam, epoch: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub frames: usize,
    pub balanced_accuracy: f64,
    pub cosim: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub batches: usize,
    pub mean_loss: f64,
    pub validation: Option<ValidationSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
    pub gradient_check: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TrainStatus {
    Completed,
    /// The model in the outcome is the one from before this step.
    Diverged { epoch: usize, batch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestModel<T> {
    pub epoch: usize,
    pub balanced_accuracy: f64,
    pub model: PdNetModel<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub state: TrainState<T>,
    pub log: TrainLog,
    pub status: TrainStatus,
    /// Highest validation balanced accuracy seen at an epoch end.
    pub best: Option<BestModel<T>>,
}

impl<T: Scalar> TrainOutcome<T> {
    /// The validation-selected model, or the final one without validation.
    pub fn selected_model(&self) -> &PdNetModel<T> {
        self.best.as_ref().map_or(&self.state.model, |b| &b.model)
    }
}

/// Trains for `cfg.epochs` epochs from a fresh optimizer state.
pub fn train<T: Scalar>(
    model: PdNetModel<T>,
    train_set: &[Sample<T>],
    validation: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_from(TrainState::new(model), train_set, validation, cfg, cfg.epochs)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Continues training from `state` until `until_epoch` epochs are complete.
///
/// The batch order, augmentation draws and learning rate of an epoch depend
/// only on the seed and the epoch index, so stopping and resuming from a
/// saved state reproduces an uninterrupted run.
pub fn train_from<T: Scalar>(
    mut state: TrainState<T>,
    train_set: &[Sample<T>],
    validation: &[Sample<T>],
    cfg: &TrainConfig,
    until_epoch: usize,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if until_epoch > cfg.epochs {
        return Err(Error::Config(format!("cannot train to epoch {until_epoch} of {}", cfg.epochs)));
    }
    let mut log = TrainLog::default();
    if cfg.gradient_check && state.epoch == 0 {
        log.gradient_check = Some(spot_check(&state.model, &train_set[0], cfg.seed)?);
    }
    let aug = &cfg.augment;
    let entries = batch_entries(train_set, aug);

    let mut best: Option<BestModel<T>> = None;
    let mut flat = state.model.to_flat();
    let mut grad = vec![T::zero(); flat.len()];
    while state.epoch < until_epoch {
        let epoch = state.epoch;
        let mut rng = epoch_rng(cfg.seed, epoch);
        let batches = balanced_batches(&entries, cfg.batch_size, aug.enable_artificial_aliasing, &mut rng)?;
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let lr = cosine_annealing(
                cfg.learning_rate,
                epoch as f64 + b as f64 / batches.len() as f64,
                cfg.epochs as f64,
            );
            let step = batch_gradient(&state.model, train_set, batch, aug, &mut rng, &mut grad);
            let batch_loss = match step {
                Ok(l) if l.is_finite() && grad.iter().all(|g| g.is_finite()) => l,
                Ok(_) | Err(Error::Numeric { .. }) => {
                    log::warn!("training diverged at epoch {epoch}, batch {b}");
                    return Ok(TrainOutcome { state, log, status: TrainStatus::Diverged { epoch, batch: b }, best });
                }
                Err(e) => return Err(e),
            };
            let before = state.adam.clone();
            state.adam.update(&mut flat, &grad, T::of(lr))?;
            if flat.iter().any(|w| !w.is_finite()) {
                state.adam = before;
                log::warn!("non-finite weights after epoch {epoch}, batch {b}");
                return Ok(TrainOutcome { state, log, status: TrainStatus::Diverged { epoch, batch: b }, best });
            }
            state.model.load_flat(&flat)?;
            log.steps.push(StepLog { epoch, batch: b, learning_rate: lr, loss: batch_loss });
            loss_sum += batch_loss;
        }
        state.epoch += 1;
        let summary = if validation.is_empty() { None } else { Some(validate(&state.model, validation)?) };
        if let Some(v) = summary {
            if best.as_ref().is_none_or(|b| v.balanced_accuracy > b.balanced_accuracy) {
                best = Some(BestModel { epoch, balanced_accuracy: v.balanced_accuracy, model: state.model.clone() });
            }
        }
        let mean_loss = loss_sum / batches.len() as f64;
        log::info!(
            "epoch {epoch}: loss {mean_loss:.5}{}",
            summary.map_or(String::new(), |v| format!(", val bacc {:.4}, cosim {:.4}", v.balanced_accuracy, v.cosim))
        );
        log.epochs.push(EpochLog { epoch, batches: batches.len(), mean_loss, validation: summary });
    }
    Ok(TrainOutcome { state, log, status: TrainStatus::Completed, best })
}

/// Mean loss and gradient of a batch, accumulated in batch order.
fn batch_gradient<T: Scalar, R: Rng>(
    model: &PdNetModel<T>,
    data: &[Sample<T>],
    batch: &[BatchItem],
    aug: &AugmentConfig,
    rng: &mut R,
    grad: &mut [T],
) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = T::zero());
    let mut total = 0.0;
    for item in batch {
        let (frame, labels) = training_view(&data[item.index], item.augment, aug, rng)?;
        let input = make_model_input(&frame)?;
        let (l, g) = loss_and_gradient(model, input.view(), &labels)?;
        total += l.as_f64();
        let mut at = 0;
        g.visit(|p| {
            for (d, &s) in grad[at..at + p.len()].iter_mut().zip(p) {
                *d += s;
            }
            at += p.len();
        });
    }
    let scale = T::one() / T::of(batch.len() as f64);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(total / batch.len() as f64)
}

/// Batch-balancing flags of a training set.
pub fn batch_entries<T: Scalar>(samples: &[Sample<T>], aug: &AugmentConfig) -> Vec<BatchEntry> {
    samples
        .iter()
        .map(|s| BatchEntry { aliased: s.is_aliased(), augmentable: !s.is_aliased() && can_force_alias(&s.frame, aug) })
        .collect()
}

/// The frame as presented to the network, after any augmentation.
///
/// `forced` items always come out aliased. A geometric transform that would
/// move every aliased pixel out of the sector is dropped.
pub fn training_view<T: Scalar, R: Rng>(
    sample: &Sample<T>,
    forced: bool,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<(DopplerFrame<T>, LabelMap)> {
    let mut frame = sample.frame.clone();
    let mut labels = sample.labels.clone();
    if forced && !sample.is_aliased() {
        (frame, labels) = artificial_alias_forced(&frame, &labels, aug, rng)?;
    } else if aug.enable_artificial_aliasing
        && !sample.is_aliased()
        && aug.alias_probability > 0.0
        && rng.random_bool(aug.alias_probability)
    {
        match artificial_alias(&frame, &labels, aug, rng) {
            Ok((f, l)) => (frame, labels) = (f, l),
            Err(Error::NotApplicable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if aug.has_geometric() {
        let (f, l) = geometric_augment(&frame, &labels, aug, rng)?;
        if labels.is_all_zero() || !l.is_all_zero() {
            (frame, labels) = (f, l);
        }
    }
    Ok((frame, labels))
}

/// Per-frame mean balanced accuracy, cosine similarity and loss.
pub fn validate<T: Scalar>(model: &PdNetModel<T>, samples: &[Sample<T>]) -> Result<ValidationSummary> {
    let (mut bacc, mut cosim, mut loss_sum, mut n_cos) = (0.0, 0.0, 0.0, 0usize);
    for s in samples {
        let (labels, dealiased) = predict(model, &s.frame)?;
        bacc += classification_metrics(&labels, &s.labels)?.balanced_accuracy;
        let reference = s.reference()?;
        if let Ok(c) = cosine_similarity(dealiased.velocity.view(), reference.velocity.view()) {
            cosim += c;
            n_cos += 1;
        }
        let input = make_model_input(&s.frame)?;
        loss_sum += loss(&forward(model, input.view())?.logits, &s.labels)?.as_f64();
    }
    let n = samples.len().max(1) as f64;
    Ok(ValidationSummary {
        frames: samples.len(),
        balanced_accuracy: bacc / n,
        cosim: if n_cos == 0 { f64::NAN } else { cosim / n_cos as f64 },
        loss: loss_sum / n,
    })
}

/// Mean loss over a data set, without augmentation.
pub fn dataset_loss<T: Scalar>(model: &PdNetModel<T>, samples: &[Sample<T>]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let input = make_model_input(&s.frame)?;
        total += loss(&forward(model, input.view())?.logits, &s.labels)?.as_f64();
    }
    Ok(total / samples.len().max(1) as f64)
}

const SPOT_CHECK_PARAMS: usize = 64;
const SPOT_CHECK_TOLERANCE: f64 = 1e-3;

fn spot_check<T: Scalar>(model: &PdNetModel<T>, sample: &Sample<T>, seed: u64) -> Result<f64> {
    let model64: PdNetModel<f64> = model.cast();
    let frame64: DopplerFrame<f64> = sample.frame.cast();
    let input = make_model_input(&frame64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model64.param_count();
    let indices: Vec<usize> = (0..SPOT_CHECK_PARAMS.min(n)).map(|_| rng.random_range(0..n)).collect();
    let report = check_gradient(&model64, input.view(), &sample.labels, 1e-4, &indices)?;
    log::info!(
        "gradient check: max relative error {:.3e} over {} parameters",
        report.max_relative_error,
        report.checked
    );
    if report.max_relative_error > SPOT_CHECK_TOLERANCE {
        return Err(Error::Numeric {
            iteration: 0,
            what: format!(
                "gradient check failed: parameter {} has relative error {:.3e}",
                report.worst_index, report.max_relative_error
            ),
        });
    }
    Ok(report.max_relative_error)
}
