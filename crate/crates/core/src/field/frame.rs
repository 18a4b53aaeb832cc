use ndarray::Array2;

use super::grid::PolarGrid;
use super::wrapping::{unwrap_with_labels, wrap};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// One color Doppler acquisition on a polar grid.
///
/// Rasters are indexed `[radial, angular]`. `wrapped` marks a measured
/// (possibly aliased) field; an alias-free reference has `wrapped == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerFrame<T> {
    pub grid: PolarGrid,
    pub velocity: Array2<T>,
    pub power: Array2<T>,
    pub nyquist_velocity: T,
    pub wrapped: bool,
}

impl<T: Scalar> DopplerFrame<T> {
    pub fn new(
        grid: PolarGrid,
        velocity: Array2<T>,
        power: Array2<T>,
        nyquist_velocity: T,
        wrapped: bool,
    ) -> Result<Self> {
        let frame = DopplerFrame { grid, velocity, power, nyquist_velocity, wrapped };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let shape = self.grid.shape();
        if self.velocity.dim() != shape || self.power.dim() != shape {
            return Err(invalid(format!(
                "raster shapes {:?}/{:?} do not match grid {:?}",
                self.velocity.dim(),
                self.power.dim(),
                shape
            )));
        }
        let vn = self.nyquist_velocity;
        if !(vn.is_finite() && vn > T::zero()) {
            return Err(invalid(format!("nyquist velocity must be positive, got {vn}")));
        }
        if let Some(v) = self.velocity.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite velocity {v}")));
        }
        if let Some(p) = self.power.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
            return Err(invalid(format!("power {p} outside [0, 1]")));
        }
        if self.wrapped {
            if let Some(v) = self.velocity.iter().find(|v| v.abs() > vn) {
                return Err(invalid(format!("wrapped frame holds |v| = {} > V_N = {vn}", v.abs())));
            }
        }
        Ok(())
    }

    /// Measured field obtained by wrapping this (alias-free) frame.
    pub fn wrapped_at(&self, nyquist_velocity: T) -> Result<Self> {
        Ok(DopplerFrame {
            grid: self.grid,
            velocity: wrap(&self.velocity, nyquist_velocity)?,
            power: self.power.clone(),
            nyquist_velocity,
            wrapped: true,
        })
    }

    /// Alias-free frame recovered by shifting each pixel by `2 n V_N`.
    pub fn unwrapped(&self, labels: &LabelMap) -> Result<Self> {
        Ok(DopplerFrame {
            grid: self.grid,
            velocity: unwrap_with_labels(&self.velocity, labels, self.nyquist_velocity)?,
            power: self.power.clone(),
            nyquist_velocity: self.nyquist_velocity,
            wrapped: false,
        })
    }

    pub fn cast<U: Scalar>(&self) -> DopplerFrame<U> {
        DopplerFrame {
            grid: self.grid,
            velocity: self.velocity.mapv(|v| U::of(v.as_f64())),
            power: self.power.mapv(|v| U::of(v.as_f64())),
            nyquist_velocity: U::of(self.nyquist_velocity.as_f64()),
            wrapped: self.wrapped,
        }
    }
}

/// Per-pixel Nyquist numbers in {-1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Array2<i8>,
}

impl LabelMap {
    pub fn new(labels: Array2<i8>) -> Result<Self> {
        if let Some(l) = labels.iter().find(|l| !(-1..=1).contains(*l)) {
            return Err(invalid(format!("label {l} outside {{-1, 0, 1}}")));
        }
        Ok(LabelMap { labels })
    }

    /// Checked conversion from unclamped Nyquist numbers.
    pub fn from_counts(counts: &Array2<i32>) -> Result<Self> {
        if let Some(n) = counts.iter().find(|n| !(-1..=1).contains(*n)) {
            return Err(Error::OutOfRegime(format!("Nyquist number {n} implies multiple aliasing")));
        }
        Ok(LabelMap { labels: counts.mapv(|n| n as i8) })
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        LabelMap { labels: Array2::zeros(shape) }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    pub fn view(&self) -> ndarray::ArrayView2<'_, i8> {
        self.labels.view()
    }

    pub fn as_array(&self) -> &Array2<i8> {
        &self.labels
    }

    pub fn into_array(self) -> Array2<i8> {
        self.labels
    }

    pub fn is_all_zero(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }

    pub fn aliased_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}
