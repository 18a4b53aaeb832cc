use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// ADAM over a flat parameter vector, with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub params: AdamParams,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, params: AdamParams) -> Self {
        Adam { params, step: 0, m: vec![T::zero(); len], v: vec![T::zero(); len] }
    }

    pub fn update(&mut self, weights: &mut [T], grads: &[T], lr: T) -> Result<()> {
        if weights.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid(format!(
                "optimizer holds {} moments, got {} weights and {} gradients",
                self.m.len(),
                weights.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let b1 = T::of(self.params.beta1);
        let b2 = T::of(self.params.beta2);
        let eps = T::of(self.params.eps);
        let c1 = T::one() - T::of(self.params.beta1.powi(self.step.min(i32::MAX as u64) as i32));
        let c2 = T::one() - T::of(self.params.beta2.powi(self.step.min(i32::MAX as u64) as i32));
        for (((w, &g), m), v) in weights.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Learning rate after `progress` of `total` epochs, annealed from `base` to 0
/// along a half cosine.
pub fn cosine_annealing(base: f64, progress: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return base;
    }
    let x = (progress / total).clamp(0.0, 1.0);
    0.5 * base * (1.0 + (std::f64::consts::PI * x).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::<f64>::new(2, AdamParams::default());
        let mut w = [1.0, -1.0];
        adam.update(&mut w, &[0.5, -3.0], 0.01).unwrap();
        assert!((w[0] - 0.99).abs() < 1e-9);
        assert!((w[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut adam = Adam::<f32>::new(3, AdamParams::default());
        let mut w = [0.3f32, -0.0, 7.0];
        let before = w;
        adam.update(&mut w, &[1.0, 2.0, -4.0], 0.0).unwrap();
        assert_eq!(w.map(f32::to_bits), before.map(f32::to_bits));
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_annealing(0.001, 0.0, 10.0), 0.001);
        assert!((cosine_annealing(0.001, 5.0, 10.0) - 0.0005).abs() < 1e-15);
        assert!(cosine_annealing(0.001, 10.0, 10.0).abs() < 1e-18);
    }
}
