use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::LabelMap;
use crate::scalar::Scalar;

/// Cosine of the angle between two flattened velocity fields.
pub fn cosine_similarity<T: Scalar>(pred: ArrayView2<T>, reference: ArrayView2<T>) -> Result<f64> {
    if pred.dim() != reference.dim() {
        return Err(invalid(format!("shapes {:?} and {:?} differ", pred.dim(), reference.dim())));
    }
    let (mut dot, mut pp, mut rr) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in pred.iter().zip(reference.iter()) {
        let (a, b) = (a.as_f64(), b.as_f64());
        dot += a * b;
        pp += a * a;
        rr += b * b;
    }
    if rr == 0.0 {
        return Err(Error::UndefinedMetric("reference field has zero norm".into()));
    }
    if pp == 0.0 {
        return Err(Error::UndefinedMetric("predicted field has zero norm".into()));
    }
    Ok((dot / (pp.sqrt() * rr.sqrt())).clamp(-1.0, 1.0))
}

/// Pixel counts with "aliased" (label != 0) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `None` when the reference has no positives.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Mean of sensitivity and specificity; with a single reference class it
    /// falls back to the rate of that class alone.
    pub fn balanced_accuracy(&self) -> f64 {
        match (self.recall(), self.specificity()) {
            (Some(r), Some(s)) => 0.5 * (r + s),
            (Some(r), None) => r,
            (None, Some(s)) => s,
            (None, None) => 1.0,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub confusion: Confusion,
    pub balanced_accuracy: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    /// `[reference][predicted]` counts over Nyquist numbers -1, 0, +1.
    pub class_confusion: [[u64; 3]; 3],
}

pub fn confusion(pred: &LabelMap, reference: &LabelMap) -> Result<Confusion> {
    Ok(classification_metrics(pred, reference)?.confusion)
}

pub fn classification_metrics(pred: &LabelMap, reference: &LabelMap) -> Result<ClassificationMetrics> {
    if pred.dim() != reference.dim() {
        return Err(invalid(format!("shapes {:?} and {:?} differ", pred.dim(), reference.dim())));
    }
    let mut c = Confusion::default();
    let mut classes = [[0u64; 3]; 3];
    for (&p, &r) in pred.view().iter().zip(reference.view().iter()) {
        classes[(r + 1) as usize][(p + 1) as usize] += 1;
        match (p != 0, r != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(ClassificationMetrics {
        confusion: c,
        balanced_accuracy: c.balanced_accuracy(),
        recall: c.recall(),
        precision: c.precision(),
        class_confusion: classes,
    })
}
