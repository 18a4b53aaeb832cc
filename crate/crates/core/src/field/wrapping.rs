use ndarray::{Array2, Zip};

use super::frame::{DopplerFrame, LabelMap};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Nyquist number and wrapped value of one sample.
///
/// Computed as `v - 2 n V_N` with `n` corrected so the result lands in
/// `[-V_N, V_N)`. Inside `|v| < 3 V_N` the subtraction is exact (Sterbenz), so
/// adding `2 n V_N` back reproduces `v` bit for bit.
fn wrap_parts<T: Scalar>(v: T, vn: T) -> (T, T) {
    let two_vn = vn + vn;
    let mut n = ((v + vn) / two_vn).floor();
    let mut w = v - n * two_vn;
    for _ in 0..2 {
        if w < -vn {
            n = n - T::one();
        } else if w >= vn {
            n = n + T::one();
        } else {
            return (n, w);
        }
        w = v - n * two_vn;
    }
    // Only reachable far outside the single-aliasing regime, where the
    // product n * 2V_N is no longer exact.
    let m = (v + vn) % two_vn;
    let m = if m < T::zero() { m + two_vn } else { m };
    let w = m - vn;
    let w = if w >= vn { -vn } else { w };
    (((v - w) / two_vn).round(), w)
}

fn check_nyquist<T: Scalar>(vn: T) -> Result<()> {
    if !(vn.is_finite() && vn > T::zero()) {
        return Err(invalid(format!("nyquist velocity must be positive and finite, got {vn}")));
    }
    Ok(())
}

fn check_finite<T: Scalar>(v: &Array2<T>) -> Result<()> {
    match v.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(invalid(format!("non-finite velocity {x}"))),
        None => Ok(()),
    }
}

/// `(v + V_N) mod 2V_N - V_N` for a single value.
pub fn wrap_scalar<T: Scalar>(v: T, vn: T) -> Result<T> {
    check_nyquist(vn)?;
    if !v.is_finite() {
        return Err(invalid(format!("non-finite velocity {v}")));
    }
    Ok(wrap_parts(v, vn).1)
}

/// `floor((v + V_N) / 2V_N)` for a single value, consistent with [`wrap_scalar`].
pub fn nyquist_number_scalar<T: Scalar>(v: T, vn: T) -> Result<i64> {
    check_nyquist(vn)?;
    if !v.is_finite() {
        return Err(invalid(format!("non-finite velocity {v}")));
    }
    wrap_parts(v, vn)
        .0
        .to_i64()
        .ok_or_else(|| invalid(format!("Nyquist number of {v} overflows")))
}

/// Aliased measurement of an alias-free velocity raster.
pub fn wrap<T: Scalar>(v_true: &Array2<T>, vn: T) -> Result<Array2<T>> {
    check_nyquist(vn)?;
    check_finite(v_true)?;
    Ok(v_true.mapv(|v| wrap_parts(v, vn).1))
}

/// Per-pixel Nyquist numbers, not clamped to the single-aliasing range.
pub fn nyquist_number<T: Scalar>(v_true: &Array2<T>, vn: T) -> Result<Array2<i32>> {
    check_nyquist(vn)?;
    check_finite(v_true)?;
    let mut out = Array2::zeros(v_true.dim());
    for (o, &v) in out.iter_mut().zip(v_true.iter()) {
        *o = wrap_parts(v, vn)
            .0
            .to_i32()
            .ok_or_else(|| invalid(format!("Nyquist number of {v} overflows")))?;
    }
    Ok(out)
}

/// Inverse of the wrapping model: `v + 2 n V_N`.
pub fn unwrap_with_labels<T: Scalar>(
    v_wrapped: &Array2<T>,
    labels: &LabelMap,
    vn: T,
) -> Result<Array2<T>> {
    check_nyquist(vn)?;
    if v_wrapped.dim() != labels.dim() {
        return Err(invalid(format!(
            "velocity shape {:?} does not match label shape {:?}",
            v_wrapped.dim(),
            labels.dim()
        )));
    }
    let two_vn = vn + vn;
    let mut out = v_wrapped.clone();
    Zip::from(&mut out).and(labels.view()).for_each(|v, &n| match n {
        1 => *v = *v + two_vn,
        -1 => *v = *v - two_vn,
        _ => {}
    });
    Ok(out)
}

/// Network input: velocity normalized by V_N times log-compressed power.
///
/// Clamped to [-1, 1]; the clamp is inactive for wrapped frames.
pub fn make_model_input<T: Scalar>(frame: &DopplerFrame<T>) -> Result<Array2<T>> {
    frame.validate()?;
    let vn = frame.nyquist_velocity;
    let mut out = Array2::zeros(frame.velocity.dim());
    Zip::from(&mut out)
        .and(&frame.velocity)
        .and(&frame.power)
        .for_each(|o, &v, &p| *o = ((v / vn) * p).max(-T::one()).min(T::one()));
    Ok(out)
}

/// Raw scanner power in [1, 100] to `log10(P) / 2` in [0, 1].
///
/// Values below 1 are clamped to 1 first.
pub fn compress_power<T: Scalar>(raw: &Array2<T>) -> Result<Array2<T>> {
    check_finite(raw)?;
    let half = T::of(0.5);
    Ok(raw.mapv(|p| (p.max(T::one()).log10() * half).min(T::one())))
}
