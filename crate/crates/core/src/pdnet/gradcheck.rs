use ndarray::ArrayView2;

use super::loss::loss;
use super::model::PdNetModel;
use super::network::{forward, loss_and_gradient};
use crate::error::Result;
use crate::field::LabelMap;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients with central differences of step `h` for
/// the listed flat parameter indices.
pub fn check_gradient(
    model: &PdNetModel<f64>,
    input: ArrayView2<f64>,
    target: &LabelMap,
    h: f64,
    indices: &[usize],
) -> Result<GradCheck> {
    let (_, grad) = loss_and_gradient(model, input, target)?;
    let analytic = grad.to_flat();
    let base = model.to_flat();
    let mut probe = model.clone();
    let mut eval = |flat: &[f64]| -> Result<f64> {
        probe.load_flat(flat)?;
        loss(&forward(&probe, input)?.logits, target)
    };
    let mut out = GradCheck { checked: 0, max_relative_error: 0.0, worst_index: 0 };
    let mut flat = base.clone();
    for &k in indices {
        flat[k] = base[k] + h;
        let up = eval(&flat)?;
        flat[k] = base[k] - h;
        let down = eval(&flat)?;
        flat[k] = base[k];
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[k], numeric, RELATIVE_FLOOR);
        if err > out.max_relative_error || out.checked == 0 {
            out.max_relative_error = err;
            out.worst_index = k;
        }
        out.checked += 1;
    }
    Ok(out)
}
