use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sampling geometry of a sector scan, before scan conversion.
///
/// Radial samples run from `r_min` to `r_max` inclusive, beams from
/// `theta_min` to `theta_max` inclusive. Angles are measured from the probe
/// axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_radial: usize,
    pub n_angular: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl PolarGrid {
    pub fn new(
        n_radial: usize,
        n_angular: usize,
        (r_min, r_max): (f64, f64),
        (theta_min, theta_max): (f64, f64),
    ) -> Result<Self> {
        let grid = PolarGrid { n_radial, n_angular, r_min, r_max, theta_min, theta_max };
        grid.validate()?;
        Ok(grid)
    }

    /// A 70 degree sector 2 cm to 16 cm deep.
    pub fn with_shape(n_radial: usize, n_angular: usize) -> Result<Self> {
        Self::new(n_radial, n_angular, (0.02, 0.16), (-0.6, 0.6))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_radial < 2 || self.n_angular < 2 {
            return Err(invalid(format!(
                "grid must be at least 2x2, got {}x{}",
                self.n_radial, self.n_angular
            )));
        }
        let finite = [self.r_min, self.r_max, self.theta_min, self.theta_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.r_min >= 0.0 && self.r_max > self.r_min) {
            return Err(invalid(format!("bad radial extent [{}, {}]", self.r_min, self.r_max)));
        }
        if !(self.theta_max > self.theta_min) {
            return Err(invalid(format!(
                "bad angular extent [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_radial, self.n_angular)
    }

    pub fn pixel_count(&self) -> usize {
        self.n_radial * self.n_angular
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_radial - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        (self.theta_max - self.theta_min) / (self.n_angular - 1) as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.dr()
    }

    pub fn angle(&self, j: usize) -> f64 {
        self.theta_min + j as f64 * self.dtheta()
    }
}
