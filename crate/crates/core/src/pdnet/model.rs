use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv, TAPS};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Channels of the primal and dual variables.
pub const STATE_CHANNELS: usize = 5;
/// Hidden width of each proximal stack.
pub const HIDDEN_CHANNELS: usize = 32;
/// Output classes, Nyquist numbers -1, 0, +1 in that order.
pub const CLASSES: usize = 3;
/// Initial rectifier slope.
pub const INITIAL_SLOPE: f64 = 0.25;

/// Architecture choices that are not learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of unrolled primal-dual iterations.
    pub iterations: usize,
    /// One dual and one primal operator reused by every iteration. When
    /// false each iteration owns its operators (the original unrolled layout).
    pub shared_weights: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { iterations: 20, shared_weights: true }
    }
}

impl ModelConfig {
    pub fn operator_sets(&self) -> usize {
        if self.shared_weights {
            1
        } else {
            self.iterations.max(1)
        }
    }
}

/// conv -> rectifier -> conv -> rectifier -> conv, all 3x3.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxStack<T> {
    pub convs: [Conv<T>; 3],
    pub slopes: [Array1<T>; 2],
}

impl<T: Scalar> ProxStack<T> {
    pub fn zeros(cin: usize) -> Self {
        ProxStack {
            convs: [
                Conv::zeros(cin, HIDDEN_CHANNELS),
                Conv::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS),
                Conv::zeros(HIDDEN_CHANNELS, STATE_CHANNELS),
            ],
            slopes: [Array1::zeros(HIDDEN_CHANNELS), Array1::zeros(HIDDEN_CHANNELS)],
        }
    }

    fn random(cin: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut stack = Self::zeros(cin);
        for conv in &mut stack.convs {
            let bound = 1.0 / ((conv.in_channels() * TAPS) as f64).sqrt();
            conv.weight.mapv_inplace(|_| T::of(rng.random_range(-bound..bound)));
            conv.bias.mapv_inplace(|_| T::of(rng.random_range(-bound..bound)));
        }
        for s in &mut stack.slopes {
            s.fill(T::of(INITIAL_SLOPE));
        }
        stack
    }
}

/// 1x1 convolution from the first primal channel to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub weight: Array1<T>,
    pub bias: Array1<T>,
}

/// Unrolled primal-dual dealiasing network.
///
/// The dual operator sees `[h (5), K(V^(2)) (1), V_D (1)]`, the primal
/// operator `[V (5), h^(1) (1)]`; both update their variable residually.
#[derive(Debug, Clone, PartialEq)]
pub struct PdNetModel<T> {
    pub config: ModelConfig,
    pub dual: Vec<ProxStack<T>>,
    pub primal: Vec<ProxStack<T>>,
    pub head: Head<T>,
}

pub(crate) const DUAL_INPUTS: usize = STATE_CHANNELS + 2;
pub(crate) const PRIMAL_INPUTS: usize = STATE_CHANNELS + 1;

impl<T: Scalar> PdNetModel<T> {
    /// All parameters zero, slopes included.
    pub fn zeros(config: ModelConfig) -> Self {
        let sets = config.operator_sets();
        PdNetModel {
            config,
            dual: (0..sets).map(|_| ProxStack::zeros(DUAL_INPUTS)).collect(),
            primal: (0..sets).map(|_| ProxStack::zeros(PRIMAL_INPUTS)).collect(),
            head: Head { weight: Array1::zeros(CLASSES), bias: Array1::zeros(CLASSES) },
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` weights and biases, slopes at 0.25.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sets = config.operator_sets();
        let dual = (0..sets).map(|_| ProxStack::random(DUAL_INPUTS, &mut rng)).collect();
        let primal = (0..sets).map(|_| ProxStack::random(PRIMAL_INPUTS, &mut rng)).collect();
        let head = Head {
            weight: Array1::from_shape_fn(CLASSES, |_| T::of(rng.random_range(-1.0..1.0))),
            bias: Array1::from_shape_fn(CLASSES, |_| T::of(rng.random_range(-1.0..1.0))),
        };
        PdNetModel { config, dual, primal, head }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub(crate) fn dual_op(&self, iteration: usize) -> &ProxStack<T> {
        &self.dual[if self.config.shared_weights { 0 } else { iteration }]
    }

    pub(crate) fn primal_op(&self, iteration: usize) -> &ProxStack<T> {
        &self.primal[if self.config.shared_weights { 0 } else { iteration }]
    }

    pub(crate) fn dual_op_mut(&mut self, iteration: usize) -> &mut ProxStack<T> {
        let k = if self.config.shared_weights { 0 } else { iteration };
        &mut self.dual[k]
    }

    pub(crate) fn primal_op_mut(&mut self, iteration: usize) -> &mut ProxStack<T> {
        let k = if self.config.shared_weights { 0 } else { iteration };
        &mut self.primal[k]
    }

    /// Visits every parameter plane in canonical order: dual convs, primal
    /// convs (weight then bias per layer), head weight and bias, then the
    /// rectifier slopes of the dual and primal stacks.
    pub fn visit(&self, mut f: impl FnMut(&[T])) {
        for stack in self.dual.iter().chain(&self.primal) {
            for conv in &stack.convs {
                f(conv.weight.as_slice().expect("standard layout"));
                f(conv.bias.as_slice().expect("standard layout"));
            }
        }
        f(self.head.weight.as_slice().expect("standard layout"));
        f(self.head.bias.as_slice().expect("standard layout"));
        for stack in self.dual.iter().chain(&self.primal) {
            for s in &stack.slopes {
                f(s.as_slice().expect("standard layout"));
            }
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [T])) {
        for stack in self.dual.iter_mut().chain(self.primal.iter_mut()) {
            for conv in &mut stack.convs {
                f(conv.weight.as_slice_mut().expect("standard layout"));
                f(conv.bias.as_slice_mut().expect("standard layout"));
            }
        }
        f(self.head.weight.as_slice_mut().expect("standard layout"));
        f(self.head.bias.as_slice_mut().expect("standard layout"));
        for stack in self.dual.iter_mut().chain(self.primal.iter_mut()) {
            for s in &mut stack.slopes {
                f(s.as_slice_mut().expect("standard layout"));
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|p| n += p.len());
        n
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|p| out.extend_from_slice(p));
        out
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut at = 0;
        self.visit_mut(|p| {
            p.copy_from_slice(&flat[at..at + p.len()]);
            at += p.len();
        });
        Ok(())
    }

    /// Overwrites the parameter at flat index `k`.
    pub fn set_param(&mut self, k: usize, value: T) -> Result<()> {
        let mut at = 0;
        let mut done = false;
        self.visit_mut(|p| {
            if !done && k < at + p.len() {
                p[k - at] = value;
                done = true;
            }
            at += p.len();
        });
        if done {
            Ok(())
        } else {
            Err(invalid(format!("parameter index {k} out of range {at}")))
        }
    }

    pub fn from_flat(config: ModelConfig, flat: &[T]) -> Result<Self> {
        let mut model = Self::zeros(config);
        model.load_flat(flat)?;
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> PdNetModel<U> {
        let flat: Vec<U> = self.to_flat().into_iter().map(|v| U::of(v.as_f64())).collect();
        PdNetModel::from_flat(self.config, &flat).expect("same architecture")
    }

    /// `self += scale * other`, parameter-wise.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let src = other.to_flat();
        let mut at = 0;
        self.visit_mut(|p| {
            let len = p.len();
            for (d, &s) in p.iter_mut().zip(&src[at..at + len]) {
                *d += scale * s;
            }
            at += len;
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|p| ok &= p.iter().all(|v| v.is_finite()));
        ok
    }
}

/// Closed-form parameter count of the shared-weight architecture.
pub fn architecture_param_count() -> usize {
    let weights = |cin: usize| TAPS * (cin * HIDDEN_CHANNELS + HIDDEN_CHANNELS * HIDDEN_CHANNELS + HIDDEN_CHANNELS * STATE_CHANNELS);
    let biases = 2 * HIDDEN_CHANNELS + STATE_CHANNELS;
    let slopes = 2 * HIDDEN_CHANNELS;
    weights(DUAL_INPUTS) + weights(PRIMAL_INPUTS) + 2 * (biases + slopes) + 2 * CLASSES
}

