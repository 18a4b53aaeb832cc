//! Binary PPM export of velocity, power and label rasters.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{scan_convert, scan_convert_nearest, DopplerFrame, LabelMap};
use crate::io::write_atomic;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderChannel {
    Velocity,
    Power,
    Labels,
}

pub type Rgb = [u8; 3];

pub const NEGATIVE: Rgb = [0, 0, 255];
pub const MIDPOINT: Rgb = [255, 255, 255];
pub const POSITIVE: Rgb = [255, 0, 0];
/// Pixels outside the imaged sector.
pub const BACKGROUND: Rgb = [0, 0, 0];
pub const LABEL_COLORS: [Rgb; 3] = [[0, 170, 0], [0, 0, 0], [220, 0, 0]];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Image { width, height, pixels }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_ppm())
    }

    pub fn distinct_colors(&self) -> usize {
        let mut seen: Vec<Rgb> = self.pixels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    [mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])]
}

/// Blue at -1, white at 0, red at +1, linear in between and clamped outside.
pub fn velocity_color(t: f64) -> Rgb {
    if t.is_nan() {
        return BACKGROUND;
    }
    let t = t.clamp(-1.0, 1.0);
    if t < 0.0 {
        lerp(MIDPOINT, NEGATIVE, -t)
    } else {
        lerp(MIDPOINT, POSITIVE, t)
    }
}

pub fn power_color(p: f64) -> Rgb {
    if p.is_nan() {
        return BACKGROUND;
    }
    let g = (p.clamp(0.0, 1.0) * 255.0).round() as u8;
    [g, g, g]
}

pub fn label_color(label: i8) -> Rgb {
    LABEL_COLORS[(label.clamp(-1, 1) + 1) as usize]
}

fn real_image(raster: ArrayView2<f64>, color: impl Fn(f64) -> Rgb) -> Image {
    let (h, w) = raster.dim();
    Image::from_fn(h, w, |r, c| color(raster[[r, c]]))
}

/// Renders one channel, optionally scan-converted to `width x height`.
///
/// Velocity is scaled by `velocity_limit` (defaults to V_N for wrapped
/// frames and 3 V_N otherwise). Polar images put depth on the rows.
pub fn render_frame<T: Scalar>(
    frame: &DopplerFrame<T>,
    labels: Option<&LabelMap>,
    channel: RenderChannel,
    scan: Option<(usize, usize)>,
    velocity_limit: Option<f64>,
) -> Result<Image> {
    let grid = &frame.grid;
    match channel {
        RenderChannel::Labels => {
            let labels = labels.ok_or_else(|| invalid("frame carries no labels"))?;
            let l: Array2<i8> = match scan {
                Some((w, h)) => scan_convert_nearest(labels.view(), grid, w, h, 0)?,
                None => labels.as_array().clone(),
            };
            let (h, w) = l.dim();
            Ok(Image::from_fn(h, w, |r, c| label_color(l[[r, c]])))
        }
        RenderChannel::Velocity | RenderChannel::Power => {
            let src = if channel == RenderChannel::Velocity { &frame.velocity } else { &frame.power };
            let v = src.mapv(|x| x.as_f64());
            let v = match scan {
                Some((w, h)) => scan_convert(v.view(), grid, w, h, f64::NAN)?,
                None => v,
            };
            if channel == RenderChannel::Power {
                return Ok(real_image(v.view(), power_color));
            }
            let vn = frame.nyquist_velocity.as_f64();
            let limit = velocity_limit.unwrap_or(if frame.wrapped { vn } else { 3.0 * vn });
            if !(limit > 0.0) {
                return Err(invalid(format!("velocity limit {limit} must be positive")));
            }
            Ok(real_image(v.view(), |x| velocity_color(x / limit)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolarGrid;

    #[test]
    fn colormap_breakpoints() {
        assert_eq!(velocity_color(0.0), MIDPOINT);
        assert_eq!(velocity_color(-1.0), NEGATIVE);
        assert_eq!(velocity_color(2.0), POSITIVE);
        assert_eq!(velocity_color(0.5), [255, 128, 128]);
    }

    #[test]
    fn zero_velocity_is_uniform() {
        let grid = PolarGrid::with_shape(8, 6).unwrap();
        let f = DopplerFrame::new(grid, Array2::zeros((8, 6)), Array2::zeros((8, 6)), 0.6, true).unwrap();
        let img = render_frame(&f, None, RenderChannel::Velocity, None, None).unwrap();
        assert!(img.pixels.iter().all(|&p| p == MIDPOINT));
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n6 8\n255\n"));
        assert_eq!(ppm.len(), 11 + 8 * 6 * 3);
    }
}
