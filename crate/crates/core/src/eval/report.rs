use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::metrics::{classification_metrics, cosine_similarity};
use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::field::LabelMap;
use crate::scalar::Scalar;
use ndarray::ArrayView2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub cosim: Option<f64>,
    pub bacc: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Aggregate { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Aggregate { mean, std: var.sqrt(), n }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub cosim: usize,
    pub recall: usize,
    pub precision: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub config_hash: String,
    pub frames: Vec<FrameRecord>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub exclusions: Exclusions,
    /// `[reference][predicted]` pixel counts over Nyquist numbers -1, 0, +1.
    pub class_confusion: [[u64; 3]; 3],
}

pub const METRICS: [&str; 4] = ["cosim", "bacc", "recall", "precision"];

impl EvalReport {
    pub fn new(method: impl Into<String>, config_hash: impl Into<String>, frames: Vec<FrameRecord>) -> Self {
        let (aggregate, exclusions) = aggregate(&frames);
        EvalReport {
            method: method.into(),
            config_hash: config_hash.into(),
            frames,
            aggregate,
            exclusions,
            class_confusion: [[0; 3]; 3],
        }
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.aggregate.get(metric).map_or(f64::NAN, |a| a.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aggregates by metric and counts of frames where a metric was undefined.
pub fn aggregate(frames: &[FrameRecord]) -> (BTreeMap<String, Aggregate>, Exclusions) {
    let collect = |f: &dyn Fn(&FrameRecord) -> Option<f64>| -> (Vec<f64>, usize) {
        let vals: Vec<f64> = frames.iter().filter_map(f).collect();
        let excluded = frames.len() - vals.len();
        (vals, excluded)
    };
    let (cosim, ex_c) = collect(&|r| r.cosim);
    let (bacc, _) = collect(&|r| Some(r.bacc));
    let (recall, ex_r) = collect(&|r| r.recall);
    let (precision, ex_p) = collect(&|r| r.precision);
    let mut map = BTreeMap::new();
    for (name, vals) in METRICS.iter().zip([cosim, bacc, recall, precision]) {
        map.insert(name.to_string(), Aggregate::of(&vals));
    }
    (map, Exclusions { cosim: ex_c, recall: ex_r, precision: ex_p })
}

/// Scores one predicted frame against a sample's ground truth.
pub fn score_frame<T: Scalar>(
    sample: &Sample<T>,
    labels: &LabelMap,
    dealiased: ArrayView2<T>,
    confusion: &mut [[u64; 3]; 3],
) -> Result<FrameRecord> {
    let m = classification_metrics(labels, &sample.labels)?;
    for (acc, row) in confusion.iter_mut().zip(m.class_confusion) {
        for (a, c) in acc.iter_mut().zip(row) {
            *a += c;
        }
    }
    let reference = sample.reference()?;
    let cosim = match cosine_similarity(dealiased, reference.velocity.view()) {
        Ok(c) => Some(c),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FrameRecord { id: sample.id.clone(), cosim, bacc: m.balanced_accuracy, recall: m.recall, precision: m.precision })
}

/// Plain-text table with one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let cell = |a: Option<&Aggregate>| match a {
        Some(a) if a.n > 0 => format!("{:.4} ± {:.4}", a.mean, a.std),
        _ => "n/a".to_string(),
    };
    let mut rows = vec![vec![
        "method".to_string(),
        "frames".to_string(),
        "cosim".to_string(),
        "bacc".to_string(),
        "recall".to_string(),
        "precision".to_string(),
    ]];
    for r in reports {
        let mut row = vec![r.method.clone(), r.frames.len().to_string()];
        row.extend(METRICS.iter().map(|m| cell(r.aggregate.get(*m))));
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = w - s.chars().count();
                if c == 0 { format!("{s}{}", " ".repeat(pad)) } else { format!("{}{s}", " ".repeat(pad)) }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        }
    }
    out
}

/// JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// SHA-256 of the canonical JSON form of a configuration.
pub fn config_hash<S: Serialize + ?Sized>(config: &S) -> Result<String> {
    let value = serde_json::to_value(config)?;
    Ok(hex::encode(Sha256::digest(canonical_json(&value).as_bytes())))
}
