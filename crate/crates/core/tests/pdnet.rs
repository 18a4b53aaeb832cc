use dealias_core::corpus::{samples_from_synthetic, Sample};
use dealias_core::field::make_model_input;
use dealias_core::pdnet::{
    argmax_labels, dataset_loss, forward, forward_with_branches, loss, loss_and_gradient, predict, train,
    train_from, wrap_inside_network, Checkpoint, ModelConfig, PdNetModel, TrainConfig, TrainState, TrainStatus,
};
use dealias_core::synth::{generate_corpus, CorpusRanges};
use dealias_core::{LabelMap, PolarGrid};
use ndarray::{array, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, seed: u64) -> Vec<Sample<f32>> {
    let grid = PolarGrid::with_shape(16, 8).unwrap();
    samples_from_synthetic(&generate_corpus::<f32>(n, 0.5, &CorpusRanges::default(), &grid, 0.6, seed).unwrap())
}

/// Largest relative error over `indices`, probing with central differences
/// whose step is halved until no rectifier or wrap branch flips.
fn branch_aware_check(model: &PdNetModel<f64>, input: &Array2<f64>, target: &LabelMap, indices: &[usize]) -> f64 {
    let analytic = loss_and_gradient(model, input.view(), target).unwrap().1.to_flat();
    let base_pattern = forward_with_branches(model, input.view()).unwrap().1;
    let base = model.to_flat();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &k in indices {
        let mut eval = |x: f64| {
            probe.set_param(k, x).unwrap();
            let (out, pattern) = forward_with_branches(&probe, input.view()).unwrap();
            (loss(&out.logits, target).unwrap(), pattern == base_pattern)
        };
        let mut h = 1e-4;
        let fd = loop {
            let ((up, a), (down, b)) = (eval(base[k] + h), eval(base[k] - h));
            if a && b {
                break (up - down) / (2.0 * h);
            }
            h /= 2.0;
            assert!(h > 1e-9, "parameter {k} sits on a kink");
        };
        probe.set_param(k, base[k]).unwrap();
        worst = worst.max((analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-6));
    }
    worst
}

#[test]
fn gradients_through_several_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for shared in [true, false] {
        let model = PdNetModel::<f64>::init(ModelConfig { iterations: 3, shared_weights: shared }, 3);
        let input = Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0));
        let target = LabelMap::new(Array2::from_shape_fn((8, 8), |_| rng.random_range(-1i8..=1))).unwrap();
        let indices: Vec<usize> = (0..model.param_count()).step_by(97).collect();
        let worst = branch_aware_check(&model, &input, &target, &indices);
        assert!(worst <= 1e-3, "shared {shared}: {worst}");
    }
}

#[test]
fn wrap_inside_network_examples() {
    let w = wrap_inside_network(&array![[1.5f64, 0.2, -1.0, 1.0, -2.5]]);
    let want = array![[-0.5, 0.2, -1.0, -1.0, -0.5]];
    assert!(w.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12), "{w}");
}

#[test]
fn zero_model_is_uniform_and_passes_input_through() {
    let model = PdNetModel::<f64>::zeros(ModelConfig { iterations: 4, shared_weights: true });
    let input = Array2::from_shape_fn((5, 6), |(i, j)| (i as f64 - j as f64) / 10.0);
    let out = forward(&model, input.view()).unwrap();
    assert_eq!(out.v_estimate, input);
    assert!(out.logits.iter().all(|&z| z == 0.0));
    assert!(argmax_labels(&out.logits).unwrap().is_all_zero());
}

#[test]
fn zero_iterations_apply_the_head_to_the_input() {
    let mut model = PdNetModel::<f64>::init(ModelConfig { iterations: 0, shared_weights: true }, 1);
    model.head.weight = array![2.0, 0.0, -1.0];
    model.head.bias = array![0.0, 0.5, 0.0];
    let input = array![[0.9, -0.6, 0.1]];
    let out = forward(&model, input.view()).unwrap();
    for (j, &x) in input.iter().enumerate() {
        assert_eq!(out.logits[[0, 0, j]], 2.0 * x);
        assert_eq!(out.logits[[1, 0, j]], 0.5);
        assert_eq!(out.logits[[2, 0, j]], -x);
    }
    assert_eq!(argmax_labels(&out.logits).unwrap().as_array(), &array![[-1i8, 1, 0]]);
}

#[test]
fn argmax_ties_prefer_zero() {
    let logits = Array3::from_shape_vec((3, 1, 3), vec![1.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
    assert_eq!(argmax_labels(&logits).unwrap().as_array(), &array![[0i8, -1, 0]]);
}

#[test]
fn zero_input_gives_finite_gradients() {
    let model = PdNetModel::<f64>::init(ModelConfig { iterations: 5, shared_weights: true }, 2);
    let (l, g) = loss_and_gradient(&model, Array2::zeros((6, 6)).view(), &LabelMap::zeros((6, 6))).unwrap();
    assert!(l.is_finite());
    assert!(g.is_finite());
}

#[test]
fn forward_is_deterministic_and_precision_consistent() {
    let samples = corpus(2, 4);
    let model = PdNetModel::<f32>::init(ModelConfig { iterations: 3, shared_weights: true }, 4);
    let input = make_model_input(&samples[0].frame).unwrap();
    assert_eq!(forward(&model, input.view()).unwrap(), forward(&model, input.view()).unwrap());
    let wide = forward(&model.cast::<f64>(), input.mapv(f64::from).view()).unwrap();
    let narrow = forward(&model, input.view()).unwrap();
    for (a, b) in wide.logits.iter().zip(narrow.logits.iter()) {
        assert!((a - *b as f64).abs() < 1e-3 * (1.0 + a.abs()));
    }
}

#[test]
fn shared_weights_store_one_operator_pair() {
    for iterations in [1, 5, 20] {
        let shared = PdNetModel::<f32>::init(ModelConfig { iterations, shared_weights: true }, 0);
        assert_eq!(shared.dual.len(), 1);
        assert_eq!(shared.primal.len(), 1);
        let bytes = Checkpoint::new(shared.clone(), None, 0, 0).to_bytes().unwrap();
        let back = Checkpoint::<f32>::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.model, shared);
        assert_eq!(back.header.param_count, dealias_core::pdnet::architecture_param_count());
        let own = PdNetModel::<f32>::init(ModelConfig { iterations, shared_weights: false }, 0);
        assert_eq!(own.dual.len(), iterations);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let samples = corpus(8, 5);
    let model = PdNetModel::<f32>::init(ModelConfig { iterations: 2, shared_weights: true }, 5);
    let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, ..TrainConfig::default() };
    let out = train(model.clone(), &samples, &[], &cfg).unwrap();
    assert_eq!(out.status, TrainStatus::Completed);
    assert_eq!(out.state.model, model);
}

#[test]
fn resume_from_checkpoint_is_bit_exact() {
    let samples = corpus(8, 6);
    let model = PdNetModel::<f32>::init(ModelConfig { iterations: 2, shared_weights: true }, 6);
    let cfg = TrainConfig { epochs: 3, seed: 6, ..TrainConfig::default() };
    let straight = train(model.clone(), &samples, &[], &cfg).unwrap();

    let first = train_from(TrainState::new(model), &samples, &[], &cfg, 1).unwrap();
    let bytes = Checkpoint::new(first.state.model, Some(first.state.adam), cfg.seed, first.state.epoch)
        .to_bytes()
        .unwrap();
    let ck = Checkpoint::<f32>::read_from(bytes.as_slice()).unwrap();
    let state = TrainState { model: ck.model, adam: ck.adam.unwrap(), epoch: ck.header.epoch };
    let resumed = train_from(state, &samples, &[], &cfg, cfg.epochs).unwrap();
    assert_eq!(resumed.state, straight.state);
}

#[test]
fn one_epoch_lowers_the_training_loss() {
    let mut lowered = 0;
    for seed in 0..10 {
        let samples = corpus(4, 100 + seed);
        let model = PdNetModel::<f32>::init(ModelConfig { iterations: 2, shared_weights: true }, seed);
        let before = dataset_loss(&model, &samples).unwrap();
        let cfg = TrainConfig { epochs: 1, seed, ..TrainConfig::default() };
        let out = train(model, &samples, &[], &cfg).unwrap();
        if dataset_loss(&out.state.model, &samples).unwrap() < before {
            lowered += 1;
        }
    }
    assert!(lowered >= 8, "{lowered}/10");
}

#[test]
fn prediction_only_shifts_by_whole_periods() {
    let samples = corpus(4, 7);
    let model = PdNetModel::<f32>::init(ModelConfig { iterations: 2, shared_weights: false }, 7);
    for s in &samples {
        let (labels, out) = predict(&model, &s.frame).unwrap();
        let two_vn = s.frame.nyquist_velocity * 2.0;
        for ((&v, &o), &n) in s.frame.velocity.iter().zip(out.velocity.iter()).zip(labels.view().iter()) {
            assert_eq!(o, match n { 1 => v + two_vn, -1 => v - two_vn, _ => v });
        }
        assert!(!out.wrapped);
    }
}
