use dealias_core::field::{nyquist_number, wrap};
use dealias_core::synth::{generate_corpus, generate_frame, CorpusRanges, FlowKind, PhantomSpec};
use dealias_core::PolarGrid;
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = FlowKind> {
    prop::sample::select(FlowKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_and_wrapped_field_follow_from_ground_truth(
        kind in kind_strategy(),
        peak in 0.1f64..1.75,
        width in 0.08f64..0.25,
        noise in 0.0f64..0.03,
        band in 0usize..4,
        seed in any::<u64>(),
    ) {
        let grid = PolarGrid::with_shape(32, 16).unwrap();
        let spec = PhantomSpec {
            kind,
            peak_speed: peak,
            jet_width: width,
            jet_center: (0.09, 0.05),
            noise_sigma: noise,
            clutter_band_width: band,
            seed,
        };
        let f = generate_frame(&spec, &grid, 0.6f64).unwrap();
        let v = &f.alias_free.velocity;
        prop_assert_eq!(&f.wrapped.velocity, &wrap(v, 0.6).unwrap());
        prop_assert_eq!(f.labels.as_array().mapv(|l| l as i32), nyquist_number(v, 0.6).unwrap());
        prop_assert_eq!(f.wrapped.unwrapped(&f.labels).unwrap().velocity, v.clone());
        prop_assert!(v.iter().all(|x| x.abs() < 1.8));
        prop_assert!(f.alias_free.power.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(f.wrapped.wrapped && !f.alias_free.wrapped);
    }
}

#[test]
fn corpus_is_reproducible_and_balanced() {
    let grid = PolarGrid::with_shape(24, 12).unwrap();
    let a = generate_corpus::<f32>(25, 0.36, &CorpusRanges::default(), &grid, 0.6, 5).unwrap();
    let b = generate_corpus::<f32>(25, 0.36, &CorpusRanges::default(), &grid, 0.6, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|c| c.aliased).count(), 9);
    for c in &a {
        assert_eq!(c.aliased, !c.frame.labels.is_all_zero());
    }
    let c = generate_corpus::<f32>(25, 0.36, &CorpusRanges::default(), &grid, 0.6, 6).unwrap();
    assert_ne!(a, c);
}

#[test]
fn noiseless_jets_have_no_clutter() {
    let grid = PolarGrid::with_shape(48, 16).unwrap();
    let corpus = generate_corpus::<f64>(10, 1.0, &CorpusRanges::noiseless_jets(), &grid, 0.6, 1).unwrap();
    for c in &corpus {
        assert_eq!(c.spec.noise_sigma, 0.0);
        assert_eq!(c.spec.clutter_band_width, 0);
        assert!(matches!(c.spec.kind, FlowKind::InflowJet | FlowKind::OutflowJet));
        assert!(c.frame.alias_free.power.iter().all(|&p| p >= 0.7));
    }
}

#[test]
fn invalid_ranges_are_rejected() {
    let grid = PolarGrid::with_shape(8, 8).unwrap();
    let bad = CorpusRanges { aliased_peak: (0.5, 1.5), ..CorpusRanges::default() };
    assert!(generate_corpus::<f32>(4, 0.5, &bad, &grid, 0.6, 0).is_err());
    assert!(generate_corpus::<f32>(4, 1.5, &CorpusRanges::default(), &grid, 0.6, 0).is_err());
}
