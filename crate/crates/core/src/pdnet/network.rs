//! Forward and reverse-mode passes of the unrolled network.

use ndarray::{concatenate, s, Array2, Array3, ArrayView2, Axis};

use super::conv::{prelu, prelu_backward};
use super::loss::{loss_with_grad, target_classes};
use super::model::{PdNetModel, ProxStack, CLASSES, STATE_CHANNELS};
use crate::error::{invalid, Error, Result};
use crate::field::{make_model_input, unwrap_with_labels, DopplerFrame, LabelMap};
use crate::scalar::Scalar;

/// Wrapping operator with unit Nyquist velocity, as used inside the network.
pub fn wrap_inside_network<T: Scalar>(v: &Array2<T>) -> Array2<T> {
    let two = T::of(2.0);
    v.mapv(|x| {
        let m = (x + T::one()) % two;
        let m = if m < T::zero() { m + two } else { m };
        let w = m - T::one();
        if w >= T::one() {
            -T::one()
        } else {
            w
        }
    })
}

/// Backward pass of [`wrap_inside_network`]: its derivative is taken as the
/// identity everywhere, jump points included.
pub fn wrap_inside_network_grad<T: Scalar>(upstream: &Array2<T>) -> Array2<T> {
    upstream.clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// `(3, H, W)` logits for Nyquist numbers -1, 0, +1.
    pub logits: Array3<T>,
    /// First primal channel after the last iteration, `(H, W)`.
    pub v_estimate: Array2<T>,
}

struct StackTape<T> {
    input: Array2<T>,
    pre: [Array2<T>; 2],
}

struct IterationTape<T> {
    dual: StackTape<T>,
    primal: StackTape<T>,
}

struct Workspace<T> {
    cols: Array2<T>,
}

fn stack_forward<T: Scalar>(
    stack: &ProxStack<T>,
    input: Array2<T>,
    (h, w): (usize, usize),
    ws: &mut Workspace<T>,
    keep: bool,
) -> (Array2<T>, Option<StackTape<T>>) {
    let a1 = stack.convs[0].forward(input.view(), h, w, &mut ws.cols);
    let z1 = prelu(&a1, &stack.slopes[0]);
    let a2 = stack.convs[1].forward(z1.view(), h, w, &mut ws.cols);
    let z2 = prelu(&a2, &stack.slopes[1]);
    let out = stack.convs[2].forward(z2.view(), h, w, &mut ws.cols);
    let tape = keep.then(|| StackTape { input, pre: [a1, a2] });
    (out, tape)
}

fn stack_backward<T: Scalar>(
    stack: &ProxStack<T>,
    tape: &StackTape<T>,
    dout: ArrayView2<T>,
    (h, w): (usize, usize),
    grad: &mut ProxStack<T>,
    ws: &mut Workspace<T>,
) -> Array2<T> {
    let [a1, a2] = &tape.pre;
    let z2 = prelu(a2, &stack.slopes[1]);
    let dz2 = stack.convs[2].backward(z2.view(), dout, h, w, &mut grad.convs[2], &mut ws.cols);
    let da2 = prelu_backward(a2, &stack.slopes[1], dz2, &mut grad.slopes[1]);
    let z1 = prelu(a1, &stack.slopes[0]);
    let dz1 = stack.convs[1].backward(z1.view(), da2.view(), h, w, &mut grad.convs[1], &mut ws.cols);
    let da1 = prelu_backward(a1, &stack.slopes[0], dz1, &mut grad.slopes[0]);
    stack.convs[0].backward(tape.input.view(), da1.view(), h, w, &mut grad.convs[0], &mut ws.cols)
}

fn check_finite<T: Scalar>(a: &Array2<T>, iteration: usize, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { iteration, what: format!("non-finite {what}") })
    }
}

struct Unrolled<T> {
    logits: Array2<T>,
    v_final: Array2<T>,
    tape: Vec<IterationTape<T>>,
}

fn run<T: Scalar>(model: &PdNetModel<T>, input: ArrayView2<T>, keep: bool) -> Result<Unrolled<T>> {
    let (h, w) = input.dim();
    if h == 0 || w == 0 {
        return Err(invalid("empty input raster"));
    }
    if let Some(v) = input.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite network input {v}")));
    }
    let p = h * w;
    let x = input.to_shape((1, p)).expect("contiguous input").to_owned();
    let mut primal = concatenate(Axis(0), &[x.view(); STATE_CHANNELS]).expect("same width");
    let mut dual = Array2::<T>::zeros((STATE_CHANNELS, p));
    let mut ws = Workspace { cols: Array2::zeros((0, 0)) };
    let mut tape = Vec::with_capacity(if keep { model.config.iterations } else { 0 });

    for i in 0..model.config.iterations {
        let k = wrap_inside_network(&primal.slice(s![1..2, ..]).to_owned());
        let dual_in = concatenate(Axis(0), &[dual.view(), k.view(), x.view()]).expect("same width");
        let (step, dual_tape) = stack_forward(model.dual_op(i), dual_in, (h, w), &mut ws, keep);
        dual = dual + step;
        check_finite(&dual, i + 1, "dual variable")?;

        let primal_in =
            concatenate(Axis(0), &[primal.view(), dual.slice(s![0..1, ..])]).expect("same width");
        let (step, primal_tape) = stack_forward(model.primal_op(i), primal_in, (h, w), &mut ws, keep);
        primal = primal + step;
        check_finite(&primal, i + 1, "primal variable")?;

        if let (Some(dual), Some(primal)) = (dual_tape, primal_tape) {
            tape.push(IterationTape { dual, primal });
        }
    }

    let v_final = primal.slice(s![0..1, ..]).to_owned();
    let mut logits = Array2::zeros((CLASSES, p));
    for c in 0..CLASSES {
        let (wc, bc) = (model.head.weight[c], model.head.bias[c]);
        logits.row_mut(c).zip_mut_with(&v_final.row(0), |o, &v| *o = wc * v + bc);
    }
    check_finite(&logits, model.config.iterations, "logits")?;
    Ok(Unrolled { logits, v_final, tape })
}

/// Runs the unrolled iterations on a V_N-normalized input raster.
pub fn forward<T: Scalar>(model: &PdNetModel<T>, input: ArrayView2<T>) -> Result<ForwardOutput<T>> {
    let (h, w) = input.dim();
    let out = run(model, input, false)?;
    Ok(ForwardOutput {
        logits: out.logits.into_shape_with_order((CLASSES, h, w)).expect("sized"),
        v_estimate: out.v_final.into_shape_with_order((h, w)).expect("sized"),
    })
}

/// Loss of one sample and the exact gradient w.r.t. every parameter.
///
/// The wrapping operator is differentiated as the identity.
pub fn loss_and_gradient<T: Scalar>(
    model: &PdNetModel<T>,
    input: ArrayView2<T>,
    target: &LabelMap,
) -> Result<(T, PdNetModel<T>)> {
    let (h, w) = input.dim();
    if target.dim() != (h, w) {
        return Err(invalid(format!(
            "target {:?} does not match input {:?}",
            target.dim(),
            (h, w)
        )));
    }
    let out = run(model, input, true)?;
    let (loss, dlogits) = loss_with_grad(out.logits.view(), &target_classes(target));
    if !loss.is_finite() {
        return Err(Error::Numeric { iteration: model.config.iterations, what: "non-finite loss".into() });
    }

    let mut grad = model.zeros_like();
    let p = h * w;
    let mut dprimal = Array2::<T>::zeros((STATE_CHANNELS, p));
    let mut ddual = Array2::<T>::zeros((STATE_CHANNELS, p));
    for c in 0..CLASSES {
        let row = dlogits.row(c);
        grad.head.weight[c] = row.dot(&out.v_final.row(0));
        grad.head.bias[c] = row.sum();
        let wc = model.head.weight[c];
        dprimal.row_mut(0).zip_mut_with(&row, |d, &g| *d = *d + wc * g);
    }

    let mut ws = Workspace { cols: Array2::zeros((0, 0)) };
    for (i, it) in out.tape.iter().enumerate().rev() {
        let dp_in = stack_backward(
            model.primal_op(i),
            &it.primal,
            dprimal.view(),
            (h, w),
            grad.primal_op_mut(i),
            &mut ws,
        );
        dprimal += &dp_in.slice(s![0..STATE_CHANNELS, ..]);
        {
            let mut d0 = ddual.row_mut(0);
            d0 += &dp_in.row(STATE_CHANNELS);
        }
        let dg_in =
            stack_backward(model.dual_op(i), &it.dual, ddual.view(), (h, w), grad.dual_op_mut(i), &mut ws);
        ddual += &dg_in.slice(s![0..STATE_CHANNELS, ..]);
        let dk = wrap_inside_network_grad(&dg_in.slice(s![STATE_CHANNELS..STATE_CHANNELS + 1, ..]).to_owned());
        let mut d1 = dprimal.row_mut(1);
        d1 += &dk.row(0);
    }
    Ok((loss, grad))
}

/// Class with the largest logit per pixel; ties resolve to Nyquist number 0,
/// then to the lower class index.
pub fn argmax_labels<T: Scalar>(logits: &Array3<T>) -> Result<LabelMap> {
    let (c, h, w) = logits.dim();
    if c != CLASSES {
        return Err(invalid(format!("expected {CLASSES} logit planes, got {c}")));
    }
    let labels = Array2::from_shape_fn((h, w), |(i, j)| {
        let mut best = 1usize;
        for k in [0usize, 2] {
            if logits[[k, i, j]] > logits[[best, i, j]] {
                best = k;
            }
        }
        best as i8 - 1
    });
    LabelMap::new(labels)
}

/// Nyquist numbers for a frame and the frame shifted by `2 n V_N` accordingly.
pub fn predict<T: Scalar>(
    model: &PdNetModel<T>,
    frame: &DopplerFrame<T>,
) -> Result<(LabelMap, DopplerFrame<T>)> {
    let input = make_model_input(frame)?;
    let out = forward(model, input.view())?;
    let labels = argmax_labels(&out.logits)?;
    let velocity = unwrap_with_labels(&frame.velocity, &labels, frame.nyquist_velocity)?;
    let dealiased = DopplerFrame {
        grid: frame.grid,
        velocity,
        power: frame.power.clone(),
        nyquist_velocity: frame.nyquist_velocity,
        wrapped: false,
    };
    Ok((labels, dealiased))
}

/// [`forward`] together with the side of every rectifier kink and every wrap
/// jump taken by the pass. The output is a smooth function of the parameters
/// and the input wherever this pattern stays constant.
pub fn forward_with_branches<T: Scalar>(
    model: &PdNetModel<T>,
    input: ArrayView2<T>,
) -> Result<(ForwardOutput<T>, Vec<i8>)> {
    let (h, w) = input.dim();
    let out = run(model, input, true)?;
    let mut pattern = Vec::new();
    for it in &out.tape {
        let v2 = it.primal.input.row(1);
        pattern.extend(v2.iter().map(|&v| ((v + T::one()) / T::of(2.0)).floor().to_i8().unwrap_or(i8::MAX)));
        for stack in [&it.dual, &it.primal] {
            for a in &stack.pre {
                pattern.extend(a.iter().map(|&x| i8::from(x >= T::zero())));
            }
        }
    }
    let fwd = ForwardOutput {
        logits: out.logits.into_shape_with_order((CLASSES, h, w)).expect("sized"),
        v_estimate: out.v_final.into_shape_with_order((h, w)).expect("sized"),
    };
    Ok((fwd, pattern))
}
