//! Training-time augmentation: artificial aliasing, geometric transforms and
//! batch balancing.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{nyquist_number, wrap, wrap_scalar, DopplerFrame, LabelMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enable_artificial_aliasing: bool,
    /// Chance that an eligible alias-free frame is artificially aliased even
    /// when its batch already holds an aliased sample.
    pub alias_probability: f64,
    /// Range of the factor `u` in `V_N' = u V_N`.
    pub nyquist_shrink_range: (f64, f64),
    /// Eligible pixels have `|v| > alpha V_N` ...
    pub velocity_threshold_alpha: f64,
    /// ... and power above `tau`.
    pub power_threshold_tau: f64,
    /// Maximum sector rotation, radians; applied as a whole-beam shift.
    pub rotation_range: f64,
    pub flip_probability: f64,
    /// Negate velocities when the angular axis is mirrored.
    pub flip_negates_velocity: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enable_artificial_aliasing: true,
            alias_probability: 0.5,
            nyquist_shrink_range: (0.5, 0.9),
            velocity_threshold_alpha: 0.5,
            power_threshold_tau: 0.5,
            rotation_range: 0.0,
            flip_probability: 0.0,
            flip_negates_velocity: false,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.nyquist_shrink_range;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!("nyquist_shrink_range {:?} must satisfy 0 < low < high < 1", (lo, hi))));
        }
        for (name, v) in [
            ("velocity_threshold_alpha", self.velocity_threshold_alpha),
            ("power_threshold_tau", self.power_threshold_tau),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.alias_probability) {
            return Err(Error::Config(format!("alias_probability {} outside [0, 1]", self.alias_probability)));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!("flip_probability {} outside [0, 1]", self.flip_probability)));
        }
        if !(self.rotation_range.is_finite() && self.rotation_range >= 0.0) {
            return Err(Error::Config(format!("rotation_range {} must be >= 0", self.rotation_range)));
        }
        Ok(())
    }

    pub fn has_geometric(&self) -> bool {
        self.rotation_range > 0.0 || self.flip_probability > 0.0
    }
}

/// True when the frame holds at least one fast, strong pixel.
pub fn is_augmentable<T: Scalar>(frame: &DopplerFrame<T>, cfg: &AugmentConfig) -> bool {
    let vmin = T::of(cfg.velocity_threshold_alpha) * frame.nyquist_velocity;
    let pmin = T::of(cfg.power_threshold_tau);
    frame.velocity.iter().zip(frame.power.iter()).any(|(&v, &p)| v.abs() > vmin && p > pmin)
}

/// Re-wraps an alias-free frame at `V_N' = factor * V_N` and derives the
/// matching labels.
pub fn artificial_alias_with_factor<T: Scalar>(
    frame: &DopplerFrame<T>,
    labels: &LabelMap,
    factor: T,
) -> Result<(DopplerFrame<T>, LabelMap)> {
    if !labels.is_all_zero() {
        return Err(invalid("artificial aliasing needs an alias-free frame"));
    }
    if labels.dim() != frame.velocity.dim() {
        return Err(invalid("label shape does not match frame"));
    }
    if !(factor > T::zero() && factor < T::one()) {
        return Err(invalid(format!("shrink factor {factor} outside (0, 1)")));
    }
    let vn = factor * frame.nyquist_velocity;
    let out_labels = LabelMap::from_counts(&nyquist_number(&frame.velocity, vn)?)?;
    let out = DopplerFrame {
        grid: frame.grid,
        velocity: wrap(&frame.velocity, vn)?,
        power: frame.power.clone(),
        nyquist_velocity: vn,
        wrapped: true,
    };
    Ok((out, out_labels))
}

/// Artificial aliasing with a random shrink factor drawn from the config.
///
/// Returns [`Error::NotApplicable`] when no pixel passes the velocity and
/// power thresholds; callers skip augmentation for that frame.
pub fn artificial_alias<T: Scalar, R: Rng + ?Sized>(
    frame: &DopplerFrame<T>,
    labels: &LabelMap,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(DopplerFrame<T>, LabelMap)> {
    if !is_augmentable(frame, cfg) {
        return Err(Error::NotApplicable("no pixel above the velocity and power thresholds".into()));
    }
    let (lo, hi) = cfg.nyquist_shrink_range;
    let u = rng.random_range(lo..hi);
    artificial_alias_with_factor(frame, labels, T::of(u))
}

/// Largest `|v| / V_N` among pixels above both thresholds.
fn eligible_peak<T: Scalar>(frame: &DopplerFrame<T>, cfg: &AugmentConfig) -> Option<f64> {
    let vn = frame.nyquist_velocity.as_f64();
    frame
        .velocity
        .iter()
        .zip(frame.power.iter())
        .filter(|(&v, &p)| v.abs().as_f64() > cfg.velocity_threshold_alpha * vn && p.as_f64() > cfg.power_threshold_tau)
        .map(|(&v, _)| v.abs().as_f64() / vn)
        .max_by(f64::total_cmp)
}

/// True when some shrink factor in range is certain to alias the frame.
pub fn can_force_alias<T: Scalar>(frame: &DopplerFrame<T>, cfg: &AugmentConfig) -> bool {
    eligible_peak(frame, cfg).is_some_and(|m| m > cfg.nyquist_shrink_range.0)
}

/// Artificial aliasing that always produces at least one aliased pixel.
///
/// The factor is drawn from `(low, min(high, m))`, `m` being the fastest
/// eligible pixel relative to V_N.
pub fn artificial_alias_forced<T: Scalar, R: Rng + ?Sized>(
    frame: &DopplerFrame<T>,
    labels: &LabelMap,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(DopplerFrame<T>, LabelMap)> {
    let (lo, hi) = cfg.nyquist_shrink_range;
    let peak = eligible_peak(frame, cfg).filter(|&m| m > lo);
    let Some(m) = peak else {
        return Err(Error::NotApplicable("no eligible pixel faster than the smallest shrink factor".into()));
    };
    for _ in 0..8 {
        let u = rng.random_range(lo..hi.min(m));
        let out = artificial_alias_with_factor(frame, labels, T::of(u))?;
        if !out.1.is_all_zero() {
            return Ok(out);
        }
    }
    Err(Error::NotApplicable("shrink factors too close to the fastest eligible pixel".into()))
}

/// A whole-beam rotation followed by an optional mirror of the angular axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GeometricTransform {
    /// Beams to shift by; vacated beams are zero-filled.
    pub shift: isize,
    pub flip: bool,
    pub negate: bool,
}

impl GeometricTransform {
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, dtheta: f64, rng: &mut R) -> Self {
        let shift = if cfg.rotation_range > 0.0 {
            (rng.random_range(-cfg.rotation_range..=cfg.rotation_range) / dtheta).round() as isize
        } else {
            0
        };
        let flip = cfg.flip_probability > 0.0 && rng.random_bool(cfg.flip_probability);
        GeometricTransform { shift, flip, negate: flip && cfg.flip_negates_velocity }
    }

    pub fn is_identity(&self) -> bool {
        self.shift == 0 && !self.flip
    }

    /// Moves every column; `negate` is not applied here.
    pub fn apply_to_raster<A: Copy>(&self, raster: &Array2<A>, fill: A) -> Array2<A> {
        let (nr, na) = raster.dim();
        let mut out = Array2::from_elem((nr, na), fill);
        for j in 0..na {
            let src = j as isize - self.shift;
            if src < 0 || src >= na as isize {
                continue;
            }
            let dst = if self.flip { na - 1 - j } else { j };
            out.column_mut(dst).assign(&raster.column(src as usize));
        }
        out
    }
}

/// Applies the same transform to velocity, power and labels.
pub fn apply_transform<T: Scalar>(
    frame: &DopplerFrame<T>,
    labels: &LabelMap,
    t: &GeometricTransform,
) -> Result<(DopplerFrame<T>, LabelMap)> {
    let mut velocity = t.apply_to_raster(&frame.velocity, T::zero());
    let power = t.apply_to_raster(&frame.power, T::zero());
    let mut counts = t.apply_to_raster(labels.as_array(), 0i8).mapv(|l| l as i32);
    if t.negate {
        let vn = frame.nyquist_velocity;
        let two_vn = vn + vn;
        for (v, n) in velocity.iter_mut().zip(counts.iter_mut()) {
            let true_v = -(*v + T::of(*n as f64) * two_vn);
            let w = wrap_scalar(-*v, vn)?;
            // -v may sit on the +V_N edge, which wraps one period down
            let shift = ((-*v - w) / two_vn).round().to_i32().unwrap_or(0);
            *n = shift - *n;
            *v = w;
            debug_assert!((true_v - (w + T::of(*n as f64) * two_vn)).abs() <= vn * T::epsilon() * T::of(8.0));
        }
    }
    let out = DopplerFrame { velocity, power, ..frame.clone() };
    Ok((out, LabelMap::from_counts(&counts)?))
}

/// Random rotation/flip drawn from `cfg`, applied consistently to all rasters.
pub fn geometric_augment<T: Scalar, R: Rng + ?Sized>(
    frame: &DopplerFrame<T>,
    labels: &LabelMap,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(DopplerFrame<T>, LabelMap)> {
    let t = GeometricTransform::sample(cfg, frame.grid.dtheta(), rng);
    apply_transform(frame, labels, &t)
}

/// What `balanced_batches` needs to know about one corpus frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub aliased: bool,
    pub augmentable: bool,
}

/// One slot of a batch. `augment` asks for artificial aliasing of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    pub index: usize,
    pub augment: bool,
}

/// Splits one epoch into batches that each contain an aliased sample.
///
/// The epoch starts as a random permutation. A batch without an aliased frame
/// first swaps with a batch holding a spare aliased frame; failing that it
/// marks an augmentable member for artificial aliasing (when allowed); as a
/// last resort an aliased frame (or, in a corpus without any, an augmentable
/// one marked for aliasing) is repeated in place of one member, and
/// displaced members are regrouped into extra batches so every frame still
/// appears at least once.
pub fn balanced_batches<R: Rng + ?Sized>(
    entries: &[BatchEntry],
    batch_size: usize,
    allow_augmentation: bool,
    rng: &mut R,
) -> Result<Vec<Vec<BatchItem>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if entries.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    let aliased: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].aliased).collect();
    let can_augment = |i: usize| allow_augmentation && entries[i].augmentable;
    if aliased.is_empty() && !(0..entries.len()).any(can_augment) {
        return Err(Error::Config(
            "no aliased frame in the corpus and artificial aliasing unavailable".into(),
        ));
    }

    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<BatchItem>> = order
        .chunks(batch_size)
        .map(|c| c.iter().map(|&index| BatchItem { index, augment: false }).collect())
        .collect();
    let spares: Vec<usize> = (0..entries.len()).filter(|&i| can_augment(i)).collect();
    // an aliased frame, or an artificially aliased one when the corpus has none
    let pick_positive = |rng: &mut R| {
        if aliased.is_empty() {
            BatchItem { index: spares[rng.random_range(0..spares.len())], augment: true }
        } else {
            BatchItem { index: aliased[rng.random_range(0..aliased.len())], augment: false }
        }
    };
    let positive = |b: &[BatchItem]| b.iter().filter(|it| entries[it.index].aliased || it.augment).count();

    let mut displaced = Vec::new();
    for k in 0..batches.len() {
        if positive(&batches[k]) > 0 {
            continue;
        }
        if let Some(donor) = (0..batches.len()).find(|&d| {
            d != k && batches[d].iter().filter(|it| entries[it.index].aliased).count() >= 2
        }) {
            let from = batches[donor].iter().position(|it| entries[it.index].aliased).expect("donor has one");
            let (a, b) = if donor < k { batches.split_at_mut(k) } else { batches.split_at_mut(donor) };
            let (dst, src) = if donor < k { (&mut b[0], &mut a[donor]) } else { (&mut a[k], &mut b[0]) };
            std::mem::swap(&mut dst[0], &mut src[from]);
            continue;
        }
        if let Some(slot) = batches[k].iter().position(|it| can_augment(it.index)) {
            batches[k][slot].augment = true;
            continue;
        }
        if batch_size == 1 {
            return Err(Error::Config(format!(
                "cannot place frame {} in a batch with an aliased sample",
                batches[k][0].index
            )));
        }
        let fill = pick_positive(rng);
        if batches[k].len() == batch_size {
            displaced.push(batches[k][0]);
            batches[k][0] = fill;
        } else {
            batches[k].push(fill);
        }
    }
    for group in displaced.chunks((batch_size - 1).max(1)) {
        let mut batch = group.to_vec();
        batch.push(pick_positive(rng));
        batches.push(batch);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolarGrid;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clean_frame() -> (DopplerFrame<f64>, LabelMap) {
        let grid = PolarGrid::with_shape(2, 3).unwrap();
        let frame = DopplerFrame::new(
            grid,
            array![[0.5, 0.45, 0.1], [-0.48, 0.2, 0.0]],
            array![[0.9, 0.9, 0.9], [0.8, 0.2, 0.1]],
            0.6,
            false,
        )
        .unwrap();
        (frame, LabelMap::zeros((2, 3)))
    }

    #[test]
    fn shrink_wraps_fast_pixels() {
        let (frame, labels) = clean_frame();
        let (out, l) = artificial_alias_with_factor(&frame, &labels, 0.7).unwrap();
        let vn = 0.7 * 0.6;
        assert_eq!(out.nyquist_velocity, vn);
        // oracle: pixels above the reduced Nyquist velocity flip class
        for ((idx, &v), &n) in frame.velocity.indexed_iter().zip(l.as_array().iter()) {
            let expect = ((v + vn) / (2.0 * vn)).floor() as i8;
            assert_eq!(n, expect, "{idx:?}");
            assert_eq!(n != 0, v.abs() > vn);
        }
        assert_eq!(out.unwrapped(&l).unwrap().velocity, frame.velocity);
    }

    #[test]
    fn mild_shrink_leaves_field_unchanged() {
        let (frame, labels) = clean_frame();
        let (out, l) = artificial_alias_with_factor(&frame, &labels, 0.9).unwrap();
        assert!(l.is_all_zero());
        assert_eq!(out.velocity, frame.velocity);
    }

    #[test]
    fn not_applicable_without_strong_fast_pixels() {
        let (mut frame, labels) = clean_frame();
        frame.velocity.mapv_inplace(|v| v * 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = artificial_alias(&frame, &labels, &AugmentConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::NotApplicable(_)));
    }

    #[test]
    fn rejects_aliased_input() {
        let (frame, _) = clean_frame();
        let labels = LabelMap::new(array![[1, 0, 0], [0, 0, 0]]).unwrap();
        assert!(artificial_alias_with_factor(&frame, &labels, 0.7).is_err());
    }

    #[test]
    fn identity_and_double_flip() {
        let (frame, labels) = clean_frame();
        let id = apply_transform(&frame, &labels, &GeometricTransform::default()).unwrap();
        assert_eq!(id.0, frame);
        let flip = GeometricTransform { shift: 0, flip: true, negate: false };
        let once = apply_transform(&frame, &labels, &flip).unwrap();
        assert_ne!(once.0, frame);
        let twice = apply_transform(&once.0, &once.1, &flip).unwrap();
        assert_eq!(twice.0, frame);
        let neg = GeometricTransform { shift: 0, flip: true, negate: true };
        let once = apply_transform(&frame, &labels, &neg).unwrap();
        let twice = apply_transform(&once.0, &once.1, &neg).unwrap();
        assert_eq!(twice.0, frame);
    }

    #[test]
    fn impossible_balance_is_config_error() {
        let entries = vec![BatchEntry { aliased: false, augmentable: false }; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(balanced_batches(&entries, 2, true, &mut rng), Err(Error::Config(_))));
        let entries = vec![BatchEntry { aliased: false, augmentable: true }; 4];
        assert!(matches!(balanced_batches(&entries, 2, false, &mut rng), Err(Error::Config(_))));
        assert!(balanced_batches(&entries, 2, true, &mut rng).is_ok());
    }

    #[test]
    fn batch_of_one_on_aliased_corpus() {
        let entries = vec![BatchEntry { aliased: true, augmentable: false }; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = balanced_batches(&entries, 1, false, &mut rng).unwrap();
        assert_eq!(batches.len(), 5);
        assert!(batches.iter().all(|b| b.len() == 1));
    }
}
