//! Cross-entropy plus soft Dice over the three Nyquist classes.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use super::model::CLASSES;
use crate::error::{invalid, Result};
use crate::field::LabelMap;
use crate::scalar::Scalar;

/// Dice smoothing term.
pub const DICE_EPS: f64 = 1e-5;

/// Class index of a Nyquist number: -1 -> 0, 0 -> 1, +1 -> 2.
pub fn class_index(label: i8) -> usize {
    (label + 1) as usize
}

pub fn class_label(index: usize) -> i8 {
    index as i8 - 1
}

pub(crate) fn softmax<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut probs = logits.to_owned();
    for mut col in probs.axis_iter_mut(Axis(1)) {
        let max = col.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        col.mapv_inplace(|v| (v - max).exp());
        let s = col.sum();
        col.mapv_inplace(|v| v / s);
    }
    probs
}

/// Loss of `(classes, pixels)` logits and its gradient w.r.t. the logits.
pub(crate) fn loss_with_grad<T: Scalar>(logits: ArrayView2<T>, classes: &[usize]) -> (T, Array2<T>) {
    let p = logits.ncols();
    debug_assert_eq!(classes.len(), p);
    let n = T::of(p as f64);
    let eps = T::of(DICE_EPS);
    let probs = softmax(logits);

    let mut ce = T::zero();
    for (j, &y) in classes.iter().enumerate() {
        let col = logits.column(j);
        let max = col.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = col.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        ce = ce + (lse - col[y]);
    }
    ce = ce / n;

    let mut inter = [T::zero(); CLASSES];
    let mut psum = [T::zero(); CLASSES];
    let mut ysum = [T::zero(); CLASSES];
    for (j, &y) in classes.iter().enumerate() {
        for c in 0..CLASSES {
            psum[c] = psum[c] + probs[[c, j]];
        }
        inter[y] = inter[y] + probs[[y, j]];
        ysum[y] = ysum[y] + T::one();
    }
    let two = T::of(2.0);
    let k = T::of(CLASSES as f64);
    let mut dice_mean = T::zero();
    let mut denom = [T::zero(); CLASSES];
    let mut numer = [T::zero(); CLASSES];
    for c in 0..CLASSES {
        numer[c] = two * inter[c] + eps;
        denom[c] = psum[c] + ysum[c] + eps;
        dice_mean = dice_mean + numer[c] / denom[c];
    }
    dice_mean = dice_mean / k;
    let loss = ce + T::one() - dice_mean;

    let mut grad = Array2::zeros((CLASSES, p));
    for (j, &y) in classes.iter().enumerate() {
        // d(1 - mean dice)/d prob
        let mut g = [T::zero(); CLASSES];
        for c in 0..CLASSES {
            let hit = if c == y { two } else { T::zero() };
            g[c] = -(hit * denom[c] - numer[c]) / (denom[c] * denom[c]) / k;
        }
        let dot = (0..CLASSES).fold(T::zero(), |acc, c| acc + probs[[c, j]] * g[c]);
        for c in 0..CLASSES {
            let pc = probs[[c, j]];
            let onehot = if c == y { T::one() } else { T::zero() };
            grad[[c, j]] = (pc - onehot) / n + pc * (g[c] - dot);
        }
    }
    (loss, grad)
}

pub(crate) fn target_classes(target: &LabelMap) -> Vec<usize> {
    target.as_array().iter().map(|&l| class_index(l)).collect()
}

/// Mean pixelwise cross-entropy plus `1 - mean soft Dice` for `(3, H, W)` logits.
pub fn loss<T: Scalar>(logits: &Array3<T>, target: &LabelMap) -> Result<T> {
    let (c, h, w) = logits.dim();
    if c != CLASSES || (h, w) != target.dim() {
        return Err(invalid(format!(
            "logits {:?} do not match target {:?}",
            logits.dim(),
            target.dim()
        )));
    }
    let flat = logits.to_shape((CLASSES, h * w)).expect("contiguous logits");
    Ok(loss_with_grad(flat.view(), &target_classes(target)).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Per-pixel scalar loss written without array helpers.
    fn naive_loss(logits: &[[f64; 3]], classes: &[usize]) -> f64 {
        let n = logits.len() as f64;
        let mut ce = 0.0;
        let mut inter = [0.0; 3];
        let mut ps = [0.0; 3];
        let mut ys = [0.0; 3];
        for (z, &y) in logits.iter().zip(classes) {
            let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            let s: f64 = e.iter().sum();
            ce -= (e[y] / s).ln();
            for c in 0..3 {
                let p = e[c] / s;
                ps[c] += p;
                if c == y {
                    inter[c] += p;
                    ys[c] += 1.0;
                }
            }
        }
        let dice: f64 = (0..3).map(|c| (2.0 * inter[c] + 1e-5) / (ps[c] + ys[c] + 1e-5)).sum::<f64>() / 3.0;
        ce / n + 1.0 - dice
    }

    fn as_array(logits: &[[f64; 3]]) -> Array2<f64> {
        Array2::from_shape_fn((3, logits.len()), |(c, j)| logits[j][c])
    }

    #[test]
    fn uniform_logits_give_ln3_cross_entropy() {
        let classes: Vec<usize> = (0..30).map(|j| j % 3).collect();
        let logits = Array2::<f64>::zeros((3, 30));
        let (l, _) = loss_with_grad(logits.view(), &classes);
        // balanced target: every class has dice (2*10/3 + e)/(10 + 10 + e) = 1/3
        let dice = (20.0 / 3.0 + 1e-5) / (20.0 + 1e-5);
        assert!((l - (3f64.ln() + 1.0 - dice)).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let classes: Vec<usize> = (0..12).map(|j| [0, 1, 2, 1][j % 4]).collect();
        let logits = Array2::<f64>::from_shape_fn((3, 12), |(c, j)| if c == classes[j] { 40.0 } else { -40.0 });
        let (l, _) = loss_with_grad(logits.view(), &classes);
        assert!(l.abs() < 1e-6, "{l}");
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..40);
            let logits: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])
                .collect();
            let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let (l, _) = loss_with_grad(as_array(&logits).view(), &classes);
            assert!((l - naive_loss(&logits, &classes)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits: Vec<[f64; 3]> = (0..17)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let classes: Vec<usize> = (0..17).map(|j| if j < 3 { 2 } else { (j % 2) as usize }).collect();
        let z = as_array(&logits);
        let (_, g) = loss_with_grad(z.view(), &classes);
        let h = 1e-6;
        for c in 0..3 {
            for j in 0..17 {
                let mut plus = z.clone();
                plus[[c, j]] += h;
                let mut minus = z.clone();
                minus[[c, j]] -= h;
                let fd = (loss_with_grad(plus.view(), &classes).0 - loss_with_grad(minus.view(), &classes).0) / (2.0 * h);
                assert!((fd - g[[c, j]]).abs() < 1e-8, "{fd} vs {}", g[[c, j]]);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let logits = Array3::<f64>::zeros((3, 2, 2));
        assert!(loss(&logits, &LabelMap::zeros((2, 3))).is_err());
        assert!(loss(&Array3::<f64>::zeros((2, 2, 2)), &LabelMap::zeros((2, 2))).is_err());
    }
}
