//! Synthetic cardiac-like color Doppler phantoms with alias-free ground truth.

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{nyquist_number, DopplerFrame, LabelMap, PolarGrid};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    InflowJet,
    OutflowJet,
    Vortex,
    Mixed,
}

impl FlowKind {
    pub const ALL: [FlowKind; 4] =
        [FlowKind::InflowJet, FlowKind::OutflowJet, FlowKind::Vortex, FlowKind::Mixed];
}

/// Parameters of one phantom. The seed fixes noise, clutter and background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: FlowKind,
    /// Peak axial speed of the smooth flow field, m/s.
    pub peak_speed: f64,
    /// Angular half-width of the jet lobe (or vortex core scale), radians.
    pub jet_width: f64,
    /// (depth m, angle rad) of the jet center.
    pub jet_center: (f64, f64),
    /// Gaussian velocity noise inside the flow region, m/s.
    pub noise_sigma: f64,
    /// Width in beams of the low-power clutter band at each lateral sector edge.
    pub clutter_band_width: usize,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_speed.is_finite() && self.peak_speed > 0.0) {
            return Err(invalid(format!("peak speed must be positive, got {}", self.peak_speed)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.jet_width.is_finite() && self.jet_width > 0.0) {
            return Err(invalid(format!("jet width must be positive, got {}", self.jet_width)));
        }
        if !(self.jet_center.0.is_finite() && self.jet_center.1.is_finite()) {
            return Err(invalid("jet center must be finite"));
        }
        Ok(())
    }
}

/// Alias-free reference, its wrapped measurement and the ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame<T> {
    pub alias_free: DopplerFrame<T>,
    pub wrapped: DopplerFrame<T>,
    pub labels: LabelMap,
}

/// Fraction of clutter pixels replaced by uniform velocity noise.
const SALT_PEPPER_FRACTION: f64 = 0.3;

fn jet_lobe(r: f64, theta: f64, spec: &PhantomSpec, depth_scale: f64) -> f64 {
    let (rc, tc) = spec.jet_center;
    let dt = (theta - tc) / spec.jet_width;
    let dr = (r - rc) / depth_scale;
    (-0.5 * (dt * dt + dr * dr)).exp()
}

/// Lamb-Oseen vortex projected on the beam direction (toward probe positive).
fn vortex_axial(r: f64, theta: f64, center: (f64, f64), core: f64) -> f64 {
    let (x, z) = (r * theta.sin(), r * theta.cos());
    let (xc, zc) = (center.0 * center.1.sin(), center.0 * center.1.cos());
    let (dx, dz) = (x - xc, z - zc);
    let rho2 = dx * dx + dz * dz;
    if rho2 < 1e-18 {
        return 0.0;
    }
    let swirl = (1.0 - (-rho2 / (core * core)).exp()) / rho2;
    let (ux, uz) = (-dz * swirl, dx * swirl);
    -(ux * theta.sin() + uz * theta.cos())
}

fn smooth_flow(spec: &PhantomSpec, grid: &PolarGrid, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let depth = grid.r_max - grid.r_min;
    let depth_scale = 0.22 * depth;
    let core = (spec.jet_width * spec.jet_center.0).max(1e-4);
    let bg_amp = rng.random_range(0.1..0.25) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let bg_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mixed_offset = (spec.jet_center.0 + 0.25 * depth, spec.jet_center.1 - 1.5 * spec.jet_width);
    let mut field = Array2::zeros(grid.shape());
    for ((i, j), v) in field.indexed_iter_mut() {
        let (r, theta) = (grid.radius(i), grid.angle(j));
        let pattern = match spec.kind {
            FlowKind::InflowJet => jet_lobe(r, theta, spec, depth_scale),
            FlowKind::OutflowJet => -jet_lobe(r, theta, spec, depth_scale),
            FlowKind::Vortex => vortex_axial(r, theta, spec.jet_center, core),
            FlowKind::Mixed => {
                jet_lobe(r, theta, spec, depth_scale)
                    + 0.6 * vortex_axial(r, theta, mixed_offset, core)
            }
        };
        *v = pattern;
    }
    // vortex amplitudes are arbitrary; bring the pattern to unit peak first
    let pattern_peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if pattern_peak <= 0.0 {
        return Err(invalid("flow pattern vanishes on this grid"));
    }
    for ((i, j), v) in field.indexed_iter_mut() {
        let s = (i as f64 / (grid.n_radial - 1) as f64) * std::f64::consts::PI;
        let t = j as f64 / (grid.n_angular - 1) as f64;
        let background = bg_amp * s.sin() * (std::f64::consts::PI * t + bg_phase).cos();
        *v = *v / pattern_peak + background;
    }
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(field.mapv(|v| v / peak * spec.peak_speed))
}

fn in_clutter(j: usize, grid: &PolarGrid, band: usize) -> bool {
    j < band || j + band >= grid.n_angular
}

/// Builds one phantom and its wrapped measurement.
///
/// The alias-free field is the smooth flow pattern plus Gaussian noise;
/// lateral clutter bands carry low power, slow tissue motion and
/// salt-and-pepper velocity noise that never exceeds the Nyquist limit.
pub fn generate_frame<T: Scalar>(
    spec: &PhantomSpec,
    grid: &PolarGrid,
    v_nyquist: T,
) -> Result<SyntheticFrame<T>> {
    spec.validate()?;
    grid.validate()?;
    let vn = v_nyquist.as_f64();
    if !(vn.is_finite() && vn > 0.0) {
        return Err(invalid(format!("nyquist velocity must be positive, got {vn}")));
    }
    if spec.peak_speed >= 3.0 * vn {
        return Err(Error::OutOfRegime(format!(
            "peak speed {} m/s >= 3 V_N = {} m/s",
            spec.peak_speed,
            3.0 * vn
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let smooth = smooth_flow(spec, grid, &mut rng)?;
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("sigma >= 0");
    let power_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let tissue_amp = rng.random_range(0.02..0.08) * vn;
    let limit = 3.0 * vn * (1.0 - 1e-6);

    let mut velocity = Array2::<f64>::zeros(grid.shape());
    let mut power = Array2::<f64>::zeros(grid.shape());
    for i in 0..grid.n_radial {
        for j in 0..grid.n_angular {
            let s = i as f64 / (grid.n_radial - 1) as f64;
            let t = j as f64 / (grid.n_angular - 1) as f64;
            if in_clutter(j, grid, spec.clutter_band_width) {
                power[[i, j]] = rng.random_range(0.05..0.25);
                velocity[[i, j]] = if rng.random_bool(SALT_PEPPER_FRACTION) {
                    rng.random_range(-0.95 * vn..0.95 * vn)
                } else {
                    tissue_amp * (std::f64::consts::TAU * s).sin()
                };
            } else {
                let swell = 0.5
                    + 0.5 * (3.0 * std::f64::consts::PI * s + power_phase).cos()
                        * (std::f64::consts::PI * t).sin();
                power[[i, j]] = (0.7 + 0.3 * swell).clamp(0.7, 1.0);
                let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                velocity[[i, j]] = (smooth[[i, j]] + n).clamp(-limit, limit);
            }
        }
    }

    let alias_free = DopplerFrame::new(
        *grid,
        velocity.mapv(T::of),
        power.mapv(T::of),
        v_nyquist,
        false,
    )?;
    let wrapped = alias_free.wrapped_at(v_nyquist)?;
    let labels = LabelMap::from_counts(&nyquist_number(&alias_free.velocity, v_nyquist)?)?;
    Ok(SyntheticFrame { alias_free, wrapped, labels })
}

/// Sampling ranges for corpus generation. Speeds are fractions of V_N, depth
/// and angle of the jet center are fractions of the sector extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusRanges {
    pub kinds: Vec<FlowKind>,
    pub aliased_peak: (f64, f64),
    pub clean_peak: (f64, f64),
    pub jet_width: (f64, f64),
    pub center_depth: (f64, f64),
    pub center_angle: (f64, f64),
    pub noise_sigma: (f64, f64),
    pub clutter_band_width: (usize, usize),
}

impl Default for CorpusRanges {
    fn default() -> Self {
        CorpusRanges {
            kinds: FlowKind::ALL.to_vec(),
            aliased_peak: (1.3, 2.2),
            clean_peak: (0.3, 0.85),
            jet_width: (0.1, 0.2),
            center_depth: (0.35, 0.65),
            center_angle: (-0.3, 0.3),
            noise_sigma: (0.0, 0.02),
            clutter_band_width: (2, 4),
        }
    }
}

impl CorpusRanges {
    /// Single jets without noise or clutter.
    pub fn noiseless_jets() -> Self {
        CorpusRanges {
            kinds: vec![FlowKind::InflowJet, FlowKind::OutflowJet],
            noise_sigma: (0.0, 0.0),
            clutter_band_width: (0, 0),
            ..Self::default()
        }
    }

    /// Single jets with the default noise and clutter levels.
    pub fn cluttered_jets() -> Self {
        CorpusRanges { kinds: vec![FlowKind::InflowJet, FlowKind::OutflowJet], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if self.kinds.is_empty() {
            return Err(invalid("at least one flow kind is required"));
        }
        for (name, r) in [
            ("aliased_peak", self.aliased_peak),
            ("clean_peak", self.clean_peak),
            ("jet_width", self.jet_width),
            ("center_depth", self.center_depth),
            ("center_angle", self.center_angle),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !ordered(r) {
                return Err(invalid(format!("range {name} = {r:?} is not ordered")));
            }
        }
        if self.aliased_peak.0 <= 1.0 || self.aliased_peak.1 >= 3.0 {
            return Err(invalid("aliased_peak must lie strictly within (1, 3) V_N"));
        }
        if self.clean_peak.0 <= 0.0 || self.clean_peak.1 >= 1.0 {
            return Err(invalid("clean_peak must lie strictly within (0, 1) V_N"));
        }
        if self.clutter_band_width.0 > self.clutter_band_width.1 {
            return Err(invalid("clutter_band_width range is not ordered"));
        }
        Ok(())
    }

    fn sample(&self, aliased: bool, grid: &PolarGrid, vn: f64, rng: &mut ChaCha8Rng) -> PhantomSpec {
        fn pick(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
            if a == b {
                a
            } else {
                rng.random_range(a..b)
            }
        }
        let kind = self.kinds[rng.random_range(0..self.kinds.len())];
        let peak = pick(rng, if aliased { self.aliased_peak } else { self.clean_peak }) * vn;
        let depth = grid.r_min + pick(rng, self.center_depth) * (grid.r_max - grid.r_min);
        let mid = 0.5 * (grid.theta_min + grid.theta_max);
        let half = 0.5 * (grid.theta_max - grid.theta_min);
        let angle = mid + pick(rng, self.center_angle) * half;
        let (bmin, bmax) = self.clutter_band_width;
        PhantomSpec {
            kind,
            peak_speed: peak,
            jet_width: pick(rng, self.jet_width),
            jet_center: (depth, angle),
            noise_sigma: pick(rng, self.noise_sigma),
            clutter_band_width: rng.random_range(bmin..=bmax),
            seed: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFrame<T> {
    pub spec: PhantomSpec,
    pub aliased: bool,
    pub frame: SyntheticFrame<T>,
}

const MAX_ATTEMPTS: usize = 200;

/// Generates `n_frames` phantoms of which exactly `round(aliased_fraction * n)`
/// carry aliasing. A sampled spec whose labels disagree with its intended
/// class is redrawn from the same stream.
pub fn generate_corpus<T: Scalar>(
    n_frames: usize,
    aliased_fraction: f64,
    ranges: &CorpusRanges,
    grid: &PolarGrid,
    v_nyquist: T,
    seed: u64,
) -> Result<Vec<CorpusFrame<T>>> {
    if n_frames == 0 {
        return Err(invalid("corpus needs at least one frame"));
    }
    if !(0.0..=1.0).contains(&aliased_fraction) {
        return Err(invalid(format!("aliased fraction {aliased_fraction} outside [0, 1]")));
    }
    ranges.validate()?;
    let vn = v_nyquist.as_f64();
    let n_aliased = (aliased_fraction * n_frames as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_frames).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut aliased_flags = vec![false; n_frames];
    for &i in &order[..n_aliased] {
        aliased_flags[i] = true;
    }
    let mut frames = Vec::with_capacity(n_frames);
    for &aliased in &aliased_flags {
        let mut attempt = 0;
        let produced = loop {
            if attempt == MAX_ATTEMPTS {
                return Err(Error::Config(format!(
                    "could not draw a {} frame in {MAX_ATTEMPTS} attempts; check the ranges",
                    if aliased { "aliased" } else { "clean" }
                )));
            }
            attempt += 1;
            let spec = ranges.sample(aliased, grid, vn, &mut rng);
            let frame = generate_frame(&spec, grid, v_nyquist)?;
            if frame.labels.is_all_zero() != aliased {
                break CorpusFrame { spec, aliased, frame };
            }
        };
        frames.push(produced);
    }
    Ok(frames)
}
