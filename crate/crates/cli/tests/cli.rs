use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dealias_core::corpus::read_manifest;
use dealias_core::dff::DffRecord;
use dealias_core::{DopplerFrame, LabelMap, PolarGrid};
use ndarray::Array2;

fn dealias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dealias")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dealias(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn generate(dir: &Path, name: &str, frames: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "generate",
        "--out",
        out.to_str().unwrap(),
        "--frames",
        &frames.to_string(),
        "--grid",
        "24x12",
        "--seed",
        &seed.to_string(),
    ]);
    out
}

/// Width, height and RGB triples of a binary PPM.
fn read_ppm(p: &Path) -> (usize, usize, Vec<[u8; 3]>) {
    let bytes = std::fs::read(p).unwrap();
    let mut fields = Vec::new();
    let mut at = 0;
    while fields.len() < 4 {
        while bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        fields.push(String::from_utf8(bytes[start..at].to_vec()).unwrap());
    }
    assert_eq!(fields[0], "P6");
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    let pixels: Vec<[u8; 3]> = bytes[at + 1..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    assert_eq!(pixels.len(), w * h);
    (w, h, pixels)
}

fn distinct(pixels: &[[u8; 3]]) -> usize {
    pixels.iter().collect::<std::collections::BTreeSet<_>>().len()
}

#[test]
fn generate_is_reproducible_and_splits_aliasing() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a", 25, 3);
    let b = generate(dir.path(), "b", 25, 3);
    let (ma, mb) = (read_manifest(&a).unwrap(), read_manifest(&b).unwrap());
    assert_eq!(ma.digest().unwrap(), mb.digest().unwrap());
    assert_eq!(ma.aliased_count(), 9);
    assert_eq!(ma.frames.len(), 25);
    for e in &ma.frames {
        assert_eq!(std::fs::read(a.join(&e.file)).unwrap(), std::fs::read(b.join(&e.file)).unwrap());
    }
    let one = generate(dir.path(), "one", 1, 3);
    let m = read_manifest(&one).unwrap();
    assert_eq!(m.frames.len(), 1);
    assert_eq!(m.aliased_count(), 0);
}

#[test]
fn labels_method_reproduces_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), "c", 6, 4);
    let manifest = read_manifest(&corpus).unwrap();
    let entry = manifest.frames.iter().find(|e| e.aliased).unwrap();
    let input = corpus.join(&entry.file);
    let out = dir.path().join("out.dff");
    ok(&["dealias", "--in", input.to_str().unwrap(), "--method", "labels", "--out", out.to_str().unwrap()]);
    let got = DffRecord::load(&out).unwrap();
    let reference = DffRecord::load(&corpus.join(&entry.reference_file)).unwrap();
    assert_eq!(got.velocity, reference.velocity);
    assert!(!got.header.wrapped);

    let frame: DopplerFrame<f32> = DffRecord::load(&input).unwrap().to_frame().unwrap();
    let labels = DffRecord::load(&input).unwrap().labels.unwrap();
    let in_memory = frame.unwrapped(&labels).unwrap();
    assert_eq!(got.to_frame::<f32>().unwrap(), in_memory);
}

#[test]
fn dean_method_writes_a_shift_only_output() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), "c", 3, 5);
    let entry = &read_manifest(&corpus).unwrap().frames[0];
    let input = corpus.join(&entry.file);
    let out = dir.path().join("dean.dff");
    ok(&["dealias", "--in", input.to_str().unwrap(), "--method", "dean", "--q", "20", "--out", out.to_str().unwrap()]);
    let before = DffRecord::load(&input).unwrap();
    let after = DffRecord::load(&out).unwrap();
    let vn = before.header.v_nyquist as f32;
    let labels = after.labels.clone().unwrap();
    for ((&v, &o), &n) in before.velocity.unwrap().iter().zip(after.velocity.unwrap().iter()).zip(labels.view().iter()) {
        assert_eq!(o, match n { 1 => v + (vn + vn), -1 => v - (vn + vn), _ => v });
    }
}

#[test]
fn identity_eval_on_clean_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("clean");
    ok(&["generate", "--out", corpus.to_str().unwrap(), "--frames", "6", "--aliased-fraction", "0", "--grid", "16x8"]);
    let report = dir.path().join("r.json");
    let stdout = ok(&[
        "eval",
        "--corpus",
        corpus.to_str().unwrap(),
        "--method",
        "identity",
        "--folds",
        "3",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(stdout.contains("config hash:"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let row = &json["rows"][0];
    assert_eq!(row["aggregate"]["cosim"]["mean"], 1.0);
    assert_eq!(row["frames"].as_array().unwrap().len(), 6);
    assert!(dir.path().join("r.txt").exists());
}

#[test]
fn train_then_dealias_with_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), "c", 10, 6);
    let model = path(dir.path(), "m.pdnw");
    let stdout = ok(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        &model,
        "--epochs",
        "1",
        "--iterations",
        "2",
    ]);
    assert!(stdout.contains("config hash:"));
    assert!(Path::new(&format!("{model}.log.json")).exists());
    let entry = &read_manifest(&corpus).unwrap().frames[0];
    let out = path(dir.path(), "p.dff");
    ok(&["dealias", "--in", corpus.join(&entry.file).to_str().unwrap(), "--method", "pdnet", "--model", &model, "--out", &out]);
    assert!(DffRecord::load(Path::new(&out)).unwrap().labels.is_some());
}

#[test]
fn stopped_training_resumes_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), "c", 8, 7);
    let c = corpus.to_str().unwrap();
    let common = ["--epochs", "2", "--iterations", "1", "--seed", "3"];
    let straight = path(dir.path(), "full.state");
    let mut args = vec!["train", "--corpus", c, "--out", "-"];
    let full_model = path(dir.path(), "full.pdnw");
    args[4] = &full_model;
    args.extend(["--state", &straight]);
    args.extend(common);
    ok(&args);

    let half_state = path(dir.path(), "half.state");
    let half_model = path(dir.path(), "half.pdnw");
    let mut args = vec!["train", "--corpus", c, "--out", &half_model, "--state", &half_state, "--stop-after", "1"];
    args.extend(common);
    ok(&args);
    let resumed_state = path(dir.path(), "resumed.state");
    let resumed_model = path(dir.path(), "resumed.pdnw");
    let mut args = vec!["train", "--corpus", c, "--out", &resumed_model, "--resume", &half_state, "--state", &resumed_state];
    args.extend(common);
    ok(&args);
    assert_eq!(std::fs::read(&straight).unwrap(), std::fs::read(&resumed_state).unwrap());
}

#[test]
fn ablation_reports_each_iteration_count() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(dir.path(), "c", 10, 8);
    let report = dir.path().join("ablate.json");
    ok(&[
        "ablate-iters",
        "--corpus",
        corpus.to_str().unwrap(),
        "--iters",
        "1,2",
        "--epochs",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["iterations"], 1);
    assert_eq!(rows[1]["iterations"], 2);
}

fn write_frame(p: &Path, velocity: Array2<f32>, labels: Option<LabelMap>) {
    let grid = PolarGrid::with_shape(velocity.nrows(), velocity.ncols()).unwrap();
    let power = Array2::from_elem(velocity.dim(), 0.8f32);
    let frame = DopplerFrame::new(grid, velocity, power, 0.6, true).unwrap();
    DffRecord::from_frame(&frame, labels.as_ref()).save(p).unwrap();
}

#[test]
fn image_export() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.dff");
    let labels = LabelMap::new(Array2::from_shape_fn((12, 9), |(i, _)| (i % 3) as i8 - 1)).unwrap();
    write_frame(&zero, Array2::zeros((12, 9)), Some(labels));
    let ppm = dir.path().join("v.ppm");
    ok(&["export-image", "--in", zero.to_str().unwrap(), "--channel", "velocity", "--out", ppm.to_str().unwrap()]);
    let (w, h, pixels) = read_ppm(&ppm);
    assert_eq!((w, h), (9, 12));
    assert_eq!(distinct(&pixels), 1);

    let lab = dir.path().join("l.ppm");
    ok(&["export-image", "--in", zero.to_str().unwrap(), "--channel", "labels", "--out", lab.to_str().unwrap()]);
    assert_eq!(distinct(&read_ppm(&lab).2), 3);

    let sc = dir.path().join("s.ppm");
    ok(&[
        "export-image",
        "--in",
        zero.to_str().unwrap(),
        "--channel",
        "power",
        "--scan-convert",
        "--width",
        "64",
        "--height",
        "40",
        "--out",
        sc.to_str().unwrap(),
    ]);
    let (w, h, _) = read_ppm(&sc);
    assert_eq!((w, h), (64, 40));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dealias(&["eval", "--corpus", "/nonexistent", "--method", "identity", "--report", "/tmp/x.json"]);
    assert_eq!(missing.status.code(), Some(3));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[generate]\nframez = 3\n").unwrap();
    let bad = dealias(&["--config", cfg.to_str().unwrap(), "generate", "--out", &path(dir.path(), "g")]);
    assert_eq!(bad.status.code(), Some(2));

    let bad_flag = dealias(&["generate", "--out", &path(dir.path(), "g"), "--aliased-fraction", "1.5"]);
    assert_eq!(bad_flag.status.code(), Some(2));

    let garbage = dir.path().join("garbage.dff");
    std::fs::write(&garbage, b"not a frame").unwrap();
    let io = dealias(&["dealias", "--in", garbage.to_str().unwrap(), "--method", "dean", "--out", &path(dir.path(), "o.dff")]);
    assert_eq!(io.status.code(), Some(3));

    let no_labels = dir.path().join("nl.dff");
    write_frame(&no_labels, Array2::zeros((4, 4)), None);
    let missing_labels = dealias(&["dealias", "--in", no_labels.to_str().unwrap(), "--method", "labels", "--out", &path(dir.path(), "o.dff")]);
    assert_ne!(missing_labels.status.code(), Some(0));
}
