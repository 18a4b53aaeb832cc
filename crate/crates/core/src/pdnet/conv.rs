//! 3x3 same-padded convolutions on channel-major `(channels, pixels)` tensors.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::scalar::Scalar;

pub(crate) const TAPS: usize = 9;

/// Unfolds each 3x3 neighborhood into a column: row `c * 9 + ky * 3 + kx`.
pub(crate) fn im2col<T: Scalar>(input: ArrayView2<T>, h: usize, w: usize, cols: &mut Array2<T>) {
    let cin = input.nrows();
    let p = h * w;
    debug_assert_eq!(input.ncols(), p);
    if cols.dim() != (cin * TAPS, p) {
        *cols = Array2::zeros((cin * TAPS, p));
    }
    let input = input.as_standard_layout();
    let src = input.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().expect("standard layout");
    for c in 0..cin {
        let plane = &src[c * p..(c + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut dst[(c * TAPS + ky * 3 + kx) * p..][..p];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let line = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&line[..w - 1]);
                        }
                        1 => out.copy_from_slice(line),
                        _ => {
                            out[..w - 1].copy_from_slice(&line[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im<T: Scalar>(cols: ArrayView2<T>, h: usize, w: usize, mut out: ArrayViewMut2<T>) {
    let p = h * w;
    let cin = out.nrows();
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    for c in 0..cin {
        let mut plane_view = out.row_mut(c);
        let plane = plane_view.as_slice_mut().expect("contiguous row");
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &src[(c * TAPS + ky * 3 + kx) * p..][..p];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let g = &row[y * w..(y + 1) * w];
                    let line = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (l, &v) in line[..w - 1].iter_mut().zip(&g[1..]) {
                                *l = *l + v;
                            }
                        }
                        1 => {
                            for (l, &v) in line.iter_mut().zip(g) {
                                *l = *l + v;
                            }
                        }
                        _ => {
                            for (l, &v) in line[1..].iter_mut().zip(&g[..w - 1]) {
                                *l = *l + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Weights `(cout, cin * 9)` and bias `(cout)` of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Conv<T> {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Conv { weight: Array2::zeros((cout, cin * TAPS)), bias: Array1::zeros(cout) }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.ncols() / TAPS
    }

    pub fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    pub(crate) fn forward(
        &self,
        input: ArrayView2<T>,
        h: usize,
        w: usize,
        scratch: &mut Array2<T>,
    ) -> Array2<T> {
        im2col(input, h, w, scratch);
        let mut out = Array2::zeros((self.out_channels(), h * w));
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.fill(b);
        }
        general_mat_mul(T::one(), &self.weight, scratch, T::one(), &mut out);
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub(crate) fn backward(
        &self,
        input: ArrayView2<T>,
        dout: ArrayView2<T>,
        h: usize,
        w: usize,
        grad: &mut Conv<T>,
        scratch: &mut Array2<T>,
    ) -> Array2<T> {
        im2col(input, h, w, scratch);
        general_mat_mul(T::one(), &dout, &scratch.t(), T::one(), &mut grad.weight);
        for (g, row) in grad.bias.iter_mut().zip(dout.axis_iter(Axis(0))) {
            *g = *g + row.sum();
        }
        let mut dcols = std::mem::take(scratch);
        general_mat_mul(T::one(), &self.weight.t(), &dout, T::zero(), &mut dcols);
        let mut din = Array2::zeros((self.in_channels(), h * w));
        col2im(dcols.view(), h, w, din.view_mut());
        *scratch = dcols;
        din
    }
}

/// Channel-wise learned-slope rectifier.
pub(crate) fn prelu<T: Scalar>(pre: &Array2<T>, slopes: &Array1<T>) -> Array2<T> {
    let mut out = pre.clone();
    for (mut row, &s) in out.axis_iter_mut(Axis(0)).zip(slopes.iter()) {
        row.mapv_inplace(|a| if a > T::zero() { a } else { a * s });
    }
    out
}

/// Returns the pre-activation gradient and accumulates the slope gradient.
pub(crate) fn prelu_backward<T: Scalar>(
    pre: &Array2<T>,
    slopes: &Array1<T>,
    dout: Array2<T>,
    dslopes: &mut Array1<T>,
) -> Array2<T> {
    let mut din = dout;
    for (((mut d, a), &s), ds) in din
        .axis_iter_mut(Axis(0))
        .zip(pre.axis_iter(Axis(0)))
        .zip(slopes.iter())
        .zip(dslopes.iter_mut())
    {
        let mut acc = T::zero();
        for (g, &x) in d.iter_mut().zip(a.iter()) {
            if x <= T::zero() {
                acc = acc + x * *g;
                *g = *g * s;
            }
        }
        *ds = *ds + acc;
    }
    din
}
