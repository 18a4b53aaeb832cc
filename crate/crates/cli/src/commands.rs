use std::path::{Path, PathBuf};

use dealias_core::corpus::{load_corpus, write_corpus, CorpusMeta, Sample};
use dealias_core::dff::DffRecord;
use dealias_core::eval::{
    ablate_iterations, run_experiment, score_frame, EvalReport, ExperimentReport, MethodSpec, SplitSpec,
};
use dealias_core::field::{unwrap_with_labels, DopplerFrame, LabelMap};
use dealias_core::io::write_atomic;
use dealias_core::pdnet::{predict, train_from, Checkpoint, PdNetModel, TrainState, TrainStatus};
use dealias_core::render::{render_frame, RenderChannel};
use dealias_core::srm::dean_dealias;
use dealias_core::synth::generate_corpus;
use dealias_core::{PdNet32, PolarGrid};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::{AblateArgs, DealiasArgs, DealiasMethod, EvalArgs, EvalMethod, ExportArgs, ExportChannel, GenerateArgs, TrainArgs};

type Outcome = Result<(), Failure>;

fn announce(cfg: &RunConfig, command: &str) -> Result<String, Failure> {
    cfg.validate()?;
    let hash = cfg.hash(command)?;
    println!("config hash: {hash}");
    Ok(hash)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(e.to_string()))?;
    write_atomic(path, text.as_bytes()).map_err(Failure::from)
}

fn load_samples(dir: &Path) -> Result<Vec<Sample<f32>>, Failure> {
    let (_, samples) = load_corpus::<f32>(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    if samples.is_empty() {
        return Err(Failure::config(format!("corpus {} has no frames", dir.display())));
    }
    Ok(samples)
}

fn load_model(path: &Path) -> Result<PdNet32, Failure> {
    Checkpoint::<f32>::load(path).map(|c| c.model).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

/// Seeded hold-out split; returns (train, validation).
fn holdout(samples: &[Sample<f32>], fraction: f64, seed: u64) -> Result<(Vec<Sample<f32>>, Vec<Sample<f32>>), Failure> {
    let n = samples.len();
    let n_val = (fraction * n as f64).round() as usize;
    if n_val >= n {
        return Err(Failure::config("validation split leaves no training frames"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (val, tr) = order.split_at(n_val);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| samples[i].clone()).collect::<Vec<_>>()
    };
    Ok((pick(tr), pick(val)))
}

pub fn generate(mut cfg: RunConfig, a: GenerateArgs) -> Outcome {
    let g = &mut cfg.generate;
    if let Some(v) = a.frames {
        g.frames = v;
    }
    if let Some(v) = a.aliased_fraction {
        g.aliased_fraction = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.grid {
        g.grid = v;
    }
    if let Some(v) = a.vnyq {
        g.v_nyquist = v;
    }
    announce(&cfg, "generate")?;
    let g = &cfg.generate;
    if !(0.0..=1.0).contains(&g.aliased_fraction) {
        return Err(Failure::config(format!("aliased fraction {} outside [0, 1]", g.aliased_fraction)));
    }
    if !(g.v_nyquist.is_finite() && g.v_nyquist > 0.0) {
        return Err(Failure::config(format!("Nyquist velocity {} must be positive", g.v_nyquist)));
    }
    let grid = PolarGrid::with_shape(g.grid.0, g.grid.1).map_err(|e| Failure::config(e.to_string()))?;
    let corpus = generate_corpus::<f32>(g.frames, g.aliased_fraction, &g.ranges, &grid, g.v_nyquist as f32, g.seed)
        .map_err(|e| Failure::config(e.to_string()))?;
    let meta = CorpusMeta {
        seed: g.seed,
        grid,
        v_nyquist: g.v_nyquist,
        aliased_fraction: g.aliased_fraction,
        ranges: g.ranges.clone(),
    };
    let manifest = write_corpus(&a.out, &corpus, &meta).map_err(|e| Failure::io(format!("{}: {e}", a.out.display())))?;
    println!(
        "wrote {} frames ({} aliased) to {}; manifest digest {}",
        manifest.frames.len(),
        manifest.aliased_count(),
        a.out.display(),
        manifest.digest()?
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config_hash: &'a str,
    status: TrainStatus,
    completed_epochs: usize,
    best_epoch: Option<usize>,
    best_validation_bacc: Option<f64>,
    log: &'a dealias_core::pdnet::TrainLog,
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Outcome {
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.iterations {
        cfg.model.iterations = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    cfg.train.gradient_check |= a.gradient_check;
    let hash = announce(&cfg, "train")?;
    let samples = load_samples(&a.corpus)?;
    let (tr, val) = holdout(&samples, cfg.validation_fraction, cfg.train.seed)?;
    let state = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::<f32>::load(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            if ck.model.config != cfg.model {
                return Err(Failure::config(format!("{} was trained with {:?}", path.display(), ck.model.config)));
            }
            let adam = ck.adam.ok_or_else(|| Failure::config(format!("{} holds no optimizer state", path.display())))?;
            TrainState { model: ck.model, adam, epoch: ck.header.epoch }
        }
        None => TrainState::new(PdNetModel::init(cfg.model, cfg.init_seed)),
    };
    let until = a.stop_after.unwrap_or(cfg.train.epochs).min(cfg.train.epochs);
    println!("training on {} frames, validating on {}; epochs {}..{until}", tr.len(), val.len(), state.epoch);
    let outcome = train_from(state, &tr, &val, &cfg.train, until)?;

    let seed = cfg.train.seed;
    let state_path = a.state.clone().or_else(|| a.stop_after.map(|_| a.out.with_extension("state.pdnw")));
    if let Some(path) = &state_path {
        let s = &outcome.state;
        Checkpoint::new(s.model.clone(), Some(s.adam.clone()), seed, s.epoch).save(path)?;
    }
    let best_epoch = outcome.best.as_ref().map(|b| b.epoch);
    let selected_epoch = best_epoch.map_or(outcome.state.epoch, |e| e + 1);
    Checkpoint::new(outcome.selected_model().clone(), None, seed, selected_epoch).save(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| PathBuf::from(format!("{}.log.json", a.out.display())));
    write_json(
        &log_path,
        &TrainReport {
            config_hash: &hash,
            status: outcome.status,
            completed_epochs: outcome.state.epoch,
            best_epoch,
            best_validation_bacc: outcome.best.as_ref().map(|b| b.balanced_accuracy),
            log: &outcome.log,
        },
    )?;
    if let Some(b) = &outcome.best {
        println!("selected epoch {} (validation bacc {:.4})", b.epoch, b.balanced_accuracy);
    }
    match outcome.status {
        TrainStatus::Completed => Ok(()),
        TrainStatus::Diverged { epoch, batch } => Err(Failure::from(dealias_core::Error::Numeric {
            iteration: cfg.model.iterations,
            what: format!("training diverged at epoch {epoch}, batch {batch}; last good model written"),
        })),
    }
}

fn read_frame(path: &Path) -> Result<(DffRecord, DopplerFrame<f32>), Failure> {
    let record = DffRecord::load(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let frame = record.to_frame::<f32>().map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok((record, frame))
}

pub fn dealias(mut cfg: RunConfig, a: DealiasArgs) -> Outcome {
    if let Some(q) = a.q {
        cfg.dean.q = q;
    }
    if let Some(p) = a.power_floor {
        cfg.dean.power_floor = p;
    }
    announce(&cfg, "dealias")?;
    let (record, frame) = read_frame(&a.input)?;
    let (labels, out): (LabelMap, DopplerFrame<f32>) = match a.method {
        DealiasMethod::Labels => {
            let labels = record.labels.clone().ok_or_else(|| Failure::config("input frame carries no labels"))?;
            let velocity = unwrap_with_labels(&frame.velocity, &labels, frame.nyquist_velocity)?;
            (labels, DopplerFrame { velocity, wrapped: false, ..frame })
        }
        DealiasMethod::Dean => dean_dealias(&frame, &cfg.dean)?,
        DealiasMethod::Pdnet => {
            let path = a.model.as_deref().ok_or_else(|| Failure::config("--method pdnet needs --model"))?;
            predict(&load_model(path)?, &frame)?
        }
    };
    DffRecord::from_frame(&out, Some(&labels)).save(&a.out)?;
    println!("{} aliased pixels shifted; wrote {}", labels.aliased_pixels(), a.out.display());
    Ok(())
}

pub fn eval(mut cfg: RunConfig, a: EvalArgs) -> Outcome {
    if let Some(v) = a.folds {
        cfg.eval.folds = v;
    }
    if let Some(v) = a.seed {
        cfg.eval.seed = v;
    }
    if let Some(q) = a.q {
        cfg.dean.q = q;
    }
    if let Some(qs) = &a.q_values {
        cfg.eval.q_values = qs.clone();
    }
    let hash = announce(&cfg, "eval")?;
    let samples = load_samples(&a.corpus)?;
    let report = match (a.method, &a.model) {
        (EvalMethod::Pdnet, Some(path)) => {
            let model = load_model(path)?;
            let mut confusion = [[0u64; 3]; 3];
            let mut frames = Vec::with_capacity(samples.len());
            for s in &samples {
                let (labels, dealiased) = predict(&model, &s.frame)?;
                frames.push(score_frame(s, &labels, dealiased.velocity.view(), &mut confusion)?);
            }
            let mut row = EvalReport::new(format!("pdnet(I={})", model.config.iterations), hash.clone(), frames);
            row.class_confusion = confusion;
            ExperimentReport { config_hash: hash, seed: cfg.eval.seed, rows: vec![row] }
        }
        (method, model) => {
            if model.is_some() {
                return Err(Failure::config("--model applies to --method pdnet only"));
            }
            let spec = match method {
                EvalMethod::Identity => MethodSpec::Identity,
                EvalMethod::Labels => MethodSpec::Labels,
                EvalMethod::Dean => MethodSpec::Dean { params: cfg.dean },
                EvalMethod::DeanSweep => {
                    MethodSpec::DeanSweep { q_values: cfg.eval.q_values.clone(), power_floor: cfg.dean.power_floor }
                }
                EvalMethod::Pdnet => {
                    MethodSpec::Pdnet { model: cfg.model, train: cfg.train.clone(), init_seed: cfg.init_seed }
                }
            };
            let split = SplitSpec::KFold { folds: cfg.eval.folds, fold: a.fold };
            let mut r = run_experiment(&spec, &samples, &split, cfg.eval.seed)?;
            r.config_hash = hash.clone();
            r.rows.iter_mut().for_each(|row| row.config_hash = hash.clone());
            r
        }
    };
    write_json(&a.report, &report)?;
    let table = report.to_table();
    let table_path = a.table.clone().unwrap_or_else(|| a.report.with_extension("txt"));
    write_atomic(&table_path, table.as_bytes())?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct AblationReport<'a> {
    config_hash: &'a str,
    rows: &'a [dealias_core::eval::AblationRow],
}

pub fn ablate(mut cfg: RunConfig, a: AblateArgs) -> Outcome {
    if let Some(v) = &a.iters {
        cfg.ablate.iterations = v.clone();
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    cfg.ablate.shared_weights &= !a.per_iteration_weights;
    if cfg.ablate.iterations.is_empty() {
        return Err(Failure::config("--iters needs at least one value"));
    }
    if cfg.validation_fraction <= 0.0 {
        return Err(Failure::config("the ablation selects on a validation split; validation_fraction must be > 0"));
    }
    let hash = announce(&cfg, "ablate-iters")?;
    let samples = load_samples(&a.corpus)?;
    let (tr, val) = holdout(&samples, cfg.validation_fraction, cfg.train.seed)?;
    if val.is_empty() {
        return Err(Failure::config("validation split is empty"));
    }
    let rows =
        ablate_iterations(&cfg.ablate.iterations, cfg.ablate.shared_weights, &tr, &val, &cfg.train, cfg.init_seed)?;
    write_json(&a.report, &AblationReport { config_hash: &hash, rows: &rows })?;
    println!("{:>10}  {:>8}  {:>10}  {:>10}", "iterations", "params", "best bacc", "final bacc");
    for r in &rows {
        println!(
            "{:>10}  {:>8}  {:>10.4}  {:>10.4}",
            r.iterations, r.param_count, r.best_validation_bacc, r.final_validation_bacc
        );
    }
    Ok(())
}

pub fn export_image(cfg: RunConfig, a: ExportArgs) -> Outcome {
    announce(&cfg, "export-image")?;
    let (record, frame) = read_frame(&a.input)?;
    let channel = match a.channel {
        ExportChannel::Velocity => RenderChannel::Velocity,
        ExportChannel::Power => RenderChannel::Power,
        ExportChannel::Labels => RenderChannel::Labels,
    };
    if channel == RenderChannel::Labels && record.labels.is_none() {
        return Err(Failure::config("input frame carries no labels"));
    }
    let scan = a.scan_convert.then_some((a.width, a.height));
    let image = render_frame(&frame, record.labels.as_ref(), channel, scan, a.velocity_limit)?;
    image.save_ppm(&a.out)?;
    println!("wrote {}x{} image to {}", image.width, image.height, a.out.display());
    Ok(())
}
