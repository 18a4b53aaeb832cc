use ndarray::{Array2, ArrayView2};

use super::grid::PolarGrid;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Mapping between polar sample indices and Cartesian display pixels.
///
/// The probe apex sits at the origin, depth grows downward
/// (`x = r sin(theta)`, `z = r cos(theta)`), and the image covers the
/// bounding box of the sector including the apex. Pixel centers lie at
/// integer `(col, row)` coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ScanGeometry {
    pub grid: PolarGrid,
    pub width: usize,
    pub height: usize,
    x_min: f64,
    z_min: f64,
    sx: f64,
    sz: f64,
}

impl ScanGeometry {
    pub fn new(grid: PolarGrid, width: usize, height: usize) -> Result<Self> {
        grid.validate()?;
        if width < 2 || height < 2 {
            return Err(invalid(format!("output must be at least 2x2, got {width}x{height}")));
        }
        if grid.theta_min < -std::f64::consts::FRAC_PI_2 || grid.theta_max > std::f64::consts::FRAC_PI_2
        {
            return Err(invalid("sector must lie within +-90 degrees"));
        }
        let xs = [
            0.0,
            grid.r_min * grid.theta_min.sin(),
            grid.r_max * grid.theta_min.sin(),
            grid.r_min * grid.theta_max.sin(),
            grid.r_max * grid.theta_max.sin(),
        ];
        let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z_max = if grid.theta_min <= 0.0 && grid.theta_max >= 0.0 {
            grid.r_max
        } else {
            grid.r_max * grid.theta_min.cos().max(grid.theta_max.cos())
        };
        Ok(ScanGeometry {
            grid,
            width,
            height,
            x_min,
            z_min: 0.0,
            sx: (x_max - x_min) / width as f64,
            sz: (z_max - 0.0) / height as f64,
        })
    }

    /// Continuous `(col, row)` of a fractional polar index `(radial, angular)`.
    pub fn to_pixel(&self, radial: f64, angular: f64) -> (f64, f64) {
        let r = self.grid.r_min + radial * self.grid.dr();
        let theta = self.grid.theta_min + angular * self.grid.dtheta();
        let (x, z) = (r * theta.sin(), r * theta.cos());
        ((x - self.x_min) / self.sx - 0.5, (z - self.z_min) / self.sz - 0.5)
    }

    /// Fractional polar index `(radial, angular)` of a continuous pixel position.
    pub fn to_polar(&self, col: f64, row: f64) -> (f64, f64) {
        let x = self.x_min + (col + 0.5) * self.sx;
        let z = self.z_min + (row + 0.5) * self.sz;
        let r = x.hypot(z);
        let theta = x.atan2(z);
        (
            (r - self.grid.r_min) / self.grid.dr(),
            (theta - self.grid.theta_min) / self.grid.dtheta(),
        )
    }

    fn inside(&self, radial: f64, angular: f64) -> bool {
        let eps = 1e-9;
        radial >= -eps
            && radial <= (self.grid.n_radial - 1) as f64 + eps
            && angular >= -eps
            && angular <= (self.grid.n_angular - 1) as f64 + eps
    }
}

fn check_raster<T>(raster: &ArrayView2<T>, grid: &PolarGrid) -> Result<()> {
    if raster.dim() != grid.shape() {
        return Err(invalid(format!(
            "raster shape {:?} does not match grid {:?}",
            raster.dim(),
            grid.shape()
        )));
    }
    Ok(())
}

/// Bilinear resampling of a polar raster onto a `height x width` Cartesian image.
///
/// Pixels outside the sector get `fill`. For display only.
pub fn scan_convert<T: Scalar>(
    raster: ArrayView2<T>,
    grid: &PolarGrid,
    width: usize,
    height: usize,
    fill: T,
) -> Result<Array2<T>> {
    let geo = ScanGeometry::new(*grid, width, height)?;
    check_raster(&raster, grid)?;
    let (nr, na) = grid.shape();
    let mut out = Array2::from_elem((height, width), fill);
    for ((row, col), o) in out.indexed_iter_mut() {
        let (ri, ai) = geo.to_polar(col as f64, row as f64);
        if !geo.inside(ri, ai) {
            continue;
        }
        let ri = ri.clamp(0.0, (nr - 1) as f64);
        let ai = ai.clamp(0.0, (na - 1) as f64);
        let (r0, a0) = ((ri.floor() as usize).min(nr - 2), (ai.floor() as usize).min(na - 2));
        let (fr, fa) = (T::of(ri - r0 as f64), T::of(ai - a0 as f64));
        let one = T::one();
        let top = raster[[r0, a0]] * (one - fa) + raster[[r0, a0 + 1]] * fa;
        let bottom = raster[[r0 + 1, a0]] * (one - fa) + raster[[r0 + 1, a0 + 1]] * fa;
        *o = top * (one - fr) + bottom * fr;
    }
    Ok(out)
}

/// Nearest-sample resampling, for categorical rasters such as label maps.
pub fn scan_convert_nearest<T: Copy>(
    raster: ArrayView2<T>,
    grid: &PolarGrid,
    width: usize,
    height: usize,
    fill: T,
) -> Result<Array2<T>> {
    let geo = ScanGeometry::new(*grid, width, height)?;
    check_raster(&raster, grid)?;
    let (nr, na) = grid.shape();
    let mut out = Array2::from_elem((height, width), fill);
    for ((row, col), o) in out.indexed_iter_mut() {
        let (ri, ai) = geo.to_polar(col as f64, row as f64);
        if geo.inside(ri, ai) {
            let r = (ri.round().max(0.0) as usize).min(nr - 1);
            let a = (ai.round().max(0.0) as usize).min(na - 1);
            *o = raster[[r, a]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PolarGrid {
        PolarGrid::with_shape(48, 20).unwrap()
    }

    #[test]
    fn constant_raster_is_constant_in_sector() {
        let g = grid();
        let raster = Array2::from_elem(g.shape(), 0.37f64);
        let out = scan_convert(raster.view(), &g, 64, 48, -9.0).unwrap();
        let inside: Vec<f64> = out.iter().cloned().filter(|&v| v != -9.0).collect();
        assert!(inside.len() > 64 * 48 / 4);
        assert!(inside.iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn apex_pixel_is_filled() {
        let g = grid();
        let raster = Array2::from_elem(g.shape(), 1.0f32);
        let geo = ScanGeometry::new(g, 64, 48).unwrap();
        // pixel containing x = 0, z = 0
        let col = (-geo.x_min / geo.sx).floor() as usize;
        let out = scan_convert(raster.view(), &g, 64, 48, -1.0).unwrap();
        assert_eq!(out[[0, col]], -1.0);
    }

    #[test]
    fn sample_centers_round_trip() {
        let g = grid();
        let geo = ScanGeometry::new(g, 200, 160).unwrap();
        for i in 0..g.n_radial {
            for j in 0..g.n_angular {
                let (c, r) = geo.to_pixel(i as f64, j as f64);
                // continuous inverse
                let (ri, ai) = geo.to_polar(c, r);
                assert!((ri - i as f64).abs() < 1e-9 && (ai - j as f64).abs() < 1e-9);
                // the containing display pixel is within half a pixel per axis
                let cn = (c + 0.5).floor().clamp(0.0, 199.0);
                let rn = (r + 0.5).floor().clamp(0.0, 159.0);
                assert!((cn - c).abs() <= 0.5 + 1e-9 && (rn - r).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn rejects_small_output_and_bad_shape() {
        let g = grid();
        let raster = Array2::<f64>::zeros(g.shape());
        assert!(scan_convert(raster.view(), &g, 1, 10, 0.0).is_err());
        let wrong = Array2::<f64>::zeros((3, 3));
        assert!(scan_convert(wrong.view(), &g, 10, 10, 0.0).is_err());
    }
}
