use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::classification_metrics;
use super::report::{config_hash, format_table, score_frame, EvalReport, FrameRecord};
use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::field::{unwrap_with_labels, LabelMap};
use crate::pdnet::{predict, train, ModelConfig, PdNetModel, TrainConfig};
use crate::scalar::Scalar;
use crate::srm::{dean_dealias, DeanParams};

/// A dealiasing method to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Leaves every pixel at Nyquist number 0.
    Identity,
    /// The ground-truth labels.
    Labels,
    Dean { params: DeanParams },
    /// One row per `q`, plus a row using the `q` with the best validation
    /// balanced accuracy in each fold.
    DeanSweep { q_values: Vec<f64>, power_floor: f64 },
    Pdnet { model: ModelConfig, train: TrainConfig, init_seed: u64 },
}

impl MethodSpec {
    pub fn id(&self) -> String {
        match self {
            MethodSpec::Identity => "identity".into(),
            MethodSpec::Labels => "labels".into(),
            MethodSpec::Dean { params } => format!("dean(q={})", params.q),
            MethodSpec::DeanSweep { .. } => "dean-sweep".into(),
            MethodSpec::Pdnet { model, .. } => format!("pdnet(I={})", model.iterations),
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, MethodSpec::Pdnet { .. })
    }
}

/// Indices into the corpus for each role. Roles must not overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.validation).chain(&self.test) {
            if i >= n {
                return Err(Error::Config(format!("split index {i} outside a corpus of {n} frames")));
            }
            if !seen.insert(i) {
                return Err(Error::Config(format!("frame {i} appears in more than one split role")));
            }
        }
        if self.test.is_empty() {
            return Err(Error::Config("test split is empty".into()));
        }
        Ok(())
    }
}

/// Seeded k-fold partition; fold `f` tests on fold `f`, validates on fold
/// `f + 1` (mod k) when `k >= 3` and trains on the rest.
pub fn kfold_splits(n: usize, folds: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 || folds > n {
        return Err(Error::Config(format!("cannot split {n} frames into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    Ok((0..folds)
        .map(|f| {
            let val = if folds >= 3 { Some((f + 1) % folds) } else { None };
            let mut s = Split::default();
            for (i, &k) in fold_of.iter().enumerate() {
                if k == f {
                    s.test.push(i);
                } else if Some(k) == val {
                    s.validation.push(i);
                } else {
                    s.train.push(i);
                }
            }
            s
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Every fold in turn (or only `fold`), test records concatenated.
    KFold { folds: usize, fold: Option<usize> },
    Explicit { split: Split },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<EvalReport>,
}

impl ExperimentReport {
    pub fn row(&self, method: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        format_table(&self.rows)
    }
}

#[derive(Serialize)]
struct ExperimentKey<'a> {
    method: &'a MethodSpec,
    split: &'a SplitSpec,
    seed: u64,
}

/// Labels and dealiased velocities of a non-learned method.
fn apply_fixed<T: Scalar>(method: &FixedMethod, sample: &Sample<T>) -> Result<(LabelMap, ndarray::Array2<T>)> {
    let frame = &sample.frame;
    let labels = match method {
        FixedMethod::Identity => LabelMap::zeros(frame.velocity.dim()),
        FixedMethod::Labels => sample.labels.clone(),
        FixedMethod::Dean(p) => return dean_dealias(frame, p).map(|(l, f)| (l, f.velocity)),
    };
    let v = unwrap_with_labels(&frame.velocity, &labels, frame.nyquist_velocity)?;
    Ok((labels, v))
}

enum FixedMethod {
    Identity,
    Labels,
    Dean(DeanParams),
}

#[derive(Default)]
struct Row {
    frames: Vec<FrameRecord>,
    confusion: [[u64; 3]; 3],
}

fn score_fixed<T: Scalar>(method: &FixedMethod, samples: &[Sample<T>], idx: &[usize], row: &mut Row) -> Result<()> {
    for &i in idx {
        let (labels, v) = apply_fixed(method, &samples[i])?;
        row.frames.push(score_frame(&samples[i], &labels, v.view(), &mut row.confusion)?);
    }
    Ok(())
}

fn mean_bacc<T: Scalar>(method: &FixedMethod, samples: &[Sample<T>], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        let (labels, _) = apply_fixed(method, &samples[i])?;
        total += classification_metrics(&labels, &samples[i].labels)?.balanced_accuracy;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Runs `method` on each split and reports on the test frames.
///
/// Learned methods train on the training frames and keep the epoch with the
/// best validation balanced accuracy.
pub fn run_experiment<T: Scalar>(
    method: &MethodSpec,
    samples: &[Sample<T>],
    split: &SplitSpec,
    seed: u64,
) -> Result<ExperimentReport> {
    let hash = config_hash(&ExperimentKey { method, split, seed })?;
    let splits = match split {
        SplitSpec::Explicit { split } => vec![split.clone()],
        SplitSpec::KFold { folds, fold } => {
            let all = kfold_splits(samples.len(), *folds, seed)?;
            match fold {
                Some(f) if *f >= *folds => return Err(Error::Config(format!("fold {f} of {folds}"))),
                Some(f) => vec![all[*f].clone()],
                None => all,
            }
        }
    };
    for s in &splits {
        s.validate(samples.len())?;
        if method.is_learned() && s.train.is_empty() {
            return Err(Error::Config("learned method needs training frames".into()));
        }
    }

    let mut rows: Vec<(String, Row)> = Vec::new();
    let row = |rows: &mut Vec<(String, Row)>, name: &str| -> usize {
        match rows.iter().position(|(n, _)| n == name) {
            Some(k) => k,
            None => {
                rows.push((name.to_string(), Row::default()));
                rows.len() - 1
            }
        }
    };
    for (f, s) in splits.iter().enumerate() {
        match method {
            MethodSpec::Identity => {
                let k = row(&mut rows, &method.id());
                score_fixed(&FixedMethod::Identity, samples, &s.test, &mut rows[k].1)?;
            }
            MethodSpec::Labels => {
                let k = row(&mut rows, &method.id());
                score_fixed(&FixedMethod::Labels, samples, &s.test, &mut rows[k].1)?;
            }
            MethodSpec::Dean { params } => {
                let k = row(&mut rows, &method.id());
                score_fixed(&FixedMethod::Dean(*params), samples, &s.test, &mut rows[k].1)?;
            }
            MethodSpec::DeanSweep { q_values, power_floor } => {
                if q_values.is_empty() {
                    return Err(Error::Config("q sweep needs at least one value".into()));
                }
                let mut best: Option<(f64, f64)> = None;
                for &q in q_values {
                    let m = FixedMethod::Dean(DeanParams { q, power_floor: *power_floor });
                    let k = row(&mut rows, &format!("dean(q={q})"));
                    score_fixed(&m, samples, &s.test, &mut rows[k].1)?;
                    if !s.validation.is_empty() {
                        let b = mean_bacc(&m, samples, &s.validation)?;
                        if best.is_none_or(|(_, bb)| b > bb) {
                            best = Some((q, b));
                        }
                    }
                }
                if let Some((q, b)) = best {
                    log::info!("fold {f}: q = {q} selected (validation bacc {b:.4})");
                    let k = row(&mut rows, "dean(selected)");
                    let m = FixedMethod::Dean(DeanParams { q, power_floor: *power_floor });
                    score_fixed(&m, samples, &s.test, &mut rows[k].1)?;
                }
            }
            MethodSpec::Pdnet { model, train: cfg, init_seed } => {
                let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
                let (tr, va) = (pick(&s.train), pick(&s.validation));
                let init = PdNetModel::<T>::init(*model, init_seed.wrapping_add(f as u64));
                let outcome = train(init, &tr, &va, cfg)?;
                let trained = outcome.selected_model();
                let k = row(&mut rows, &method.id());
                let r = &mut rows[k].1;
                for &i in &s.test {
                    let (labels, dealiased) = predict(trained, &samples[i].frame)?;
                    r.frames.push(score_frame(&samples[i], &labels, dealiased.velocity.view(), &mut r.confusion)?);
                }
            }
        }
    }
    let rows = rows
        .into_iter()
        .map(|(name, r)| {
            let mut report = EvalReport::new(name, hash.clone(), r.frames);
            report.class_confusion = r.confusion;
            report
        })
        .collect();
    Ok(ExperimentReport { config_hash: hash, seed, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub iterations: usize,
    pub param_count: usize,
    pub best_epoch: Option<usize>,
    pub best_validation_bacc: f64,
    pub final_validation_bacc: f64,
    pub final_validation_cosim: f64,
}

/// Trains one network per iteration count under the same data, budget and
/// initial seed, and reports validation balanced accuracy.
pub fn ablate_iterations<T: Scalar>(
    iterations: &[usize],
    shared_weights: bool,
    train_set: &[Sample<T>],
    validation: &[Sample<T>],
    cfg: &TrainConfig,
    init_seed: u64,
) -> Result<Vec<AblationRow>> {
    if validation.is_empty() {
        return Err(Error::Config("iteration ablation needs validation frames".into()));
    }
    let mut rows = Vec::with_capacity(iterations.len());
    for &i in iterations {
        let config = ModelConfig { iterations: i, shared_weights };
        let init = PdNetModel::<T>::init(config, init_seed);
        let param_count = init.param_count();
        let out = train(init, train_set, validation, cfg)?;
        let last = out.log.epochs.last().and_then(|e| e.validation);
        rows.push(AblationRow {
            iterations: i,
            param_count,
            best_epoch: out.best.as_ref().map(|b| b.epoch),
            best_validation_bacc: out.best.as_ref().map_or(f64::NAN, |b| b.balanced_accuracy),
            final_validation_bacc: last.map_or(f64::NAN, |v| v.balanced_accuracy),
            final_validation_cosim: last.map_or(f64::NAN, |v| v.cosim),
        });
        log::info!("I = {i}: best validation bacc {:.4}", rows.last().expect("pushed").best_validation_bacc);
    }
    Ok(rows)
}
