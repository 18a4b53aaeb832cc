use dealias_core::augment::{
    apply_transform, artificial_alias, artificial_alias_forced, artificial_alias_with_factor, balanced_batches,
    can_force_alias, geometric_augment, AugmentConfig, BatchEntry, GeometricTransform,
};
use dealias_core::field::{nyquist_number, wrap};
use dealias_core::synth::{generate_corpus, CorpusRanges};
use dealias_core::{Error, LabelMap, PolarGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clean_frames(seed: u64) -> Vec<dealias_core::synth::CorpusFrame<f64>> {
    let grid = PolarGrid::with_shape(32, 12).unwrap();
    generate_corpus::<f64>(8, 0.0, &CorpusRanges::default(), &grid, 0.6, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn artificial_aliasing_matches_the_wrapping_model(seed in any::<u64>(), factor in 0.5f64..0.95) {
        for c in clean_frames(seed) {
            let f = &c.frame.alias_free;
            let (out, labels) = artificial_alias_with_factor(f, &c.frame.labels, factor).unwrap();
            let vn = factor * 0.6;
            prop_assert_eq!(out.nyquist_velocity, vn);
            prop_assert_eq!(&out.velocity, &wrap(&f.velocity, vn).unwrap());
            prop_assert_eq!(labels.as_array().mapv(|l| l as i32), nyquist_number(&f.velocity, vn).unwrap());
            prop_assert_eq!(&out.unwrapped(&labels).unwrap().velocity, &f.velocity);
            prop_assert_eq!(out.velocity.dim(), f.velocity.dim());
            prop_assert_eq!(&out.power, &f.power);
        }
    }

    #[test]
    fn forced_aliasing_always_aliases(seed in any::<u64>()) {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in clean_frames(seed) {
            let f = &c.frame.alias_free;
            match artificial_alias_forced(f, &c.frame.labels, &cfg, &mut rng) {
                Ok((out, labels)) => {
                    prop_assert!(!labels.is_all_zero());
                    let u = out.nyquist_velocity / 0.6;
                    prop_assert!(u >= 0.5 && u < 0.9);
                }
                Err(Error::NotApplicable(_)) => prop_assert!(!can_force_alias(f, &cfg)),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn geometric_transforms_keep_shape_and_consistency(seed in any::<u64>(), negate in any::<bool>()) {
        let cfg = AugmentConfig {
            rotation_range: 0.2,
            flip_probability: 0.5,
            flip_negates_velocity: negate,
            ..AugmentConfig::default()
        };
        let grid = PolarGrid::with_shape(32, 12).unwrap();
        let corpus = generate_corpus::<f64>(6, 0.5, &CorpusRanges::default(), &grid, 0.6, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &corpus {
            let (out, labels) = geometric_augment(&c.frame.wrapped, &c.frame.labels, &cfg, &mut rng).unwrap();
            prop_assert_eq!(out.velocity.dim(), c.frame.wrapped.velocity.dim());
            prop_assert_eq!(labels.dim(), c.frame.labels.dim());
            prop_assert!(out.velocity.iter().all(|v| (-0.6..0.6).contains(v)));
            let truth = out.unwrapped(&labels).unwrap().velocity;
            prop_assert!(truth.iter().all(|v| v.abs() < 1.8));
        }
    }

    #[test]
    fn every_frame_appears_and_every_batch_is_aliased(
        seed in any::<u64>(),
        n in 1usize..60,
        aliased_every in 1usize..12,
        batch_size in 2usize..9,
    ) {
        let entries: Vec<BatchEntry> =
            (0..n).map(|i| BatchEntry { aliased: i % aliased_every == 0, augmentable: false }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batches = balanced_batches(&entries, batch_size, false, &mut rng).unwrap();
        let mut seen = vec![false; n];
        for b in &batches {
            prop_assert!(!b.is_empty() && b.len() <= batch_size);
            prop_assert!(b.iter().any(|it| entries[it.index].aliased));
            for it in b {
                seen[it.index] = true;
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }
}

#[test]
fn single_aliased_frame_reaches_every_batch() {
    let mut entries = vec![BatchEntry { aliased: false, augmentable: false }; 12];
    entries[5].aliased = true;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batches = balanced_batches(&entries, 4, false, &mut rng).unwrap();
    assert!(batches.len() >= 3);
    for b in &batches {
        assert!(b.iter().any(|it| it.index == 5));
    }
}

#[test]
fn augmentation_substitutes_when_allowed() {
    let entries = vec![BatchEntry { aliased: false, augmentable: true }; 8];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batches = balanced_batches(&entries, 4, true, &mut rng).unwrap();
    assert!(batches.iter().all(|b| b.iter().any(|it| it.augment)));
}

#[test]
fn transform_round_trip_without_shift() {
    let c = &clean_frames(4)[0];
    let t = GeometricTransform { shift: 0, flip: true, negate: false };
    let (once, l1) = apply_transform(&c.frame.wrapped, &c.frame.labels, &t).unwrap();
    let (twice, l2) = apply_transform(&once, &l1, &t).unwrap();
    assert_eq!(twice, c.frame.wrapped);
    assert_eq!(l2, c.frame.labels);
}

#[test]
fn aliased_input_is_refused() {
    let grid = PolarGrid::with_shape(32, 12).unwrap();
    let c = &generate_corpus::<f64>(1, 1.0, &CorpusRanges::default(), &grid, 0.6, 0).unwrap()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(artificial_alias(&c.frame.wrapped, &c.frame.labels, &AugmentConfig::default(), &mut rng).is_err());
    assert!(artificial_alias_with_factor(&c.frame.alias_free, &LabelMap::zeros((32, 12)), 1.2).is_err());
}
