use iipad_core::cnn::{
    backward_step, checkpoint_bytes, checkpoint_from_bytes, evaluate, train, FeatureReduce, Grads,
    LayerKind, Network, Sgd, TrainConfig, STANDARD_TRACE,
};
use iipad_core::tophist::Plane;
use iipad_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn standard_shape_trace() {
    let net = Network::<f32>::standard(0).unwrap();
    assert_eq!(net.temporal_trace(), STANDARD_TRACE);
    assert_eq!(net.num_classes(), 2);
    assert_eq!(net.layers().len(), 21);
    let tap = net.feature_layer().unwrap();
    assert_eq!(tap, 17);
    let s = net.shapes()[tap + 1];
    assert_eq!((s.len, s.bins, s.channels), (1, 768, 64));
    for l in net.layers() {
        if let LayerKind::Conv { kernel, .. } = l.kind {
            assert!(kernel <= 3);
        }
    }
}

#[test]
fn invalid_layer_lists_are_rejected() {
    let pool_too_far = [LayerKind::AvgPool, LayerKind::AvgPool, LayerKind::SoftMax];
    assert!(matches!(
        Network::<f64>::zeroed(&pool_too_far, 3, 4),
        Err(Error::InvalidState(_))
    ));
    assert!(Network::<f64>::zeroed(&[LayerKind::Relu], 3, 4).is_err());
    let net = Network::<f32>::standard(0).unwrap();
    assert!(matches!(
        net.forward(&[0.0; 10]),
        Err(Error::Dimension { actual: 10, .. })
    ));
}

#[test]
fn init_is_seeded_and_fan_in_scaled() {
    let a = Network::<f32>::standard(3).unwrap();
    assert_eq!(a, Network::<f32>::standard(3).unwrap());
    assert_ne!(a, Network::<f32>::standard(4).unwrap());
    for (i, l) in a.layers().iter().enumerate() {
        assert!(l.bias.iter().all(|&b| b == 0.0));
        if l.weights.len() < 10_000 {
            continue;
        }
        let n = l.weights.len() as f64;
        let var = l.weights.iter().map(|&w| (w as f64).powi(2)).sum::<f64>() / n;
        let fan = a.fan_in(i) as f64;
        let (lo, hi) = (1.0 / fan, 2.0 / fan);
        assert!(var > lo / 3.0 && var < hi * 3.0, "layer {i}: {var}");
    }
}

#[test]
fn zero_weights_give_even_odds() {
    let net = Network::<f64>::zeroed(&iipad_core::cnn::standard_layers(), LEN, BINS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = net.predict(&random_input(&mut rng, LEN * BINS)).unwrap();
    assert_eq!(p, vec![0.5, 0.5]);
}

#[test]
fn probabilities_sum_to_one_and_sharpen() {
    let mut net = Network::<f64>::standard(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_input(&mut rng, LEN * BINS);
    let base = net.predict(&x).unwrap();
    assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(base.iter().all(|&p| p > 0.0 && p < 1.0));
    let top = if base[0] > base[1] { 0 } else { 1 };
    let mut last = base[top];
    for _ in 0..4 {
        let fc = net
            .layers_mut()
            .iter_mut()
            .find(|l| matches!(l.kind, LayerKind::FullyConnected { .. }))
            .unwrap();
        fc.weights.iter_mut().for_each(|w| *w *= 2.0);
        fc.bias.iter_mut().for_each(|b| *b *= 2.0);
        let p = net.predict(&x).unwrap();
        assert!(p[top] >= last);
        last = p[top];
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..3 {
        let worst = gradient_check(&small_layers(), 8, 8, seed);
        assert!(worst < 1e-4, "seed {seed}: {worst}");
    }
    // A four-layer truncated net.
    let short = [
        LayerKind::Conv {
            kernel: 3,
            in_channels: 1,
            out_channels: 4,
            pad: 1,
        },
        LayerKind::Relu,
        LayerKind::AvgPool,
        LayerKind::FullyConnected { outputs: 2 },
        LayerKind::SoftMax,
    ];
    assert!(gradient_check(&short, 8, 8, 9) < 1e-4);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let mut net = Network::<f32>::standard(1).unwrap();
    let before = net.clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let batch = separable_set(2, 1);
    let mut sgd = Sgd::new(&net);
    backward_step(&mut net, &mut sgd, &batch, &cfg).unwrap();
    assert_eq!(net, before);
}

#[test]
fn weight_decay_shrinks_by_exact_factor() {
    let mut net = Network::<f64>::new(&small_layers(), 8, 8, 4).unwrap();
    for l in net.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = 0.3);
    }
    let before = net.clone();
    let cfg = TrainConfig::default();
    let mut sgd = Sgd::new(&net);
    sgd.apply(&mut net, &Grads::zeros_like(&before), &cfg);
    let factor = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for (a, b) in net.layers().iter().zip(before.layers()) {
        for (w, w0) in a.weights.iter().zip(&b.weights) {
            assert!((w - w0 * factor).abs() <= 1e-15 * w0.abs());
        }
        assert_eq!(a.bias, b.bias);
    }
}

#[test]
fn repeated_steps_on_one_sample_descend() {
    let mut net = Network::<f32>::standard(2).unwrap();
    let sample = separable_set(1, 3);
    let cfg = TrainConfig::default();
    let mut sgd = Sgd::new(&net);
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let loss = backward_step(&mut net, &mut sgd, &sample, &cfg).unwrap();
        assert!(loss <= last + 1e-6, "{loss} > {last}");
        last = loss;
    }
}

#[test]
fn separable_matrices_are_learned() {
    let data = separable_set(20, 7);
    let cfg = TrainConfig {
        epochs: 200,
        seed: 11,
        ..TrainConfig::default()
    };
    let mut net = Network::<f32>::standard(11).unwrap();
    let report = train(&mut net, &data, None, &cfg).unwrap();
    assert!(report.epochs_run() <= 200);
    let (_, acc) = evaluate(&net, &data).unwrap();
    assert_eq!(acc, 1.0);

    let mut again = Network::<f32>::standard(11).unwrap();
    let report2 = train(&mut again, &data, None, &cfg).unwrap();
    assert_eq!(report, report2);
    assert_eq!(net, again);
}

#[test]
fn training_needs_two_classes_and_finite_data() {
    let mut net = Network::<f32>::standard(0).unwrap();
    let mut one_class = separable_set(4, 0);
    one_class.iter_mut().for_each(|s| s.label = 0);
    assert!(matches!(
        train(&mut net, &one_class, None, &TrainConfig::default()),
        Err(Error::InvalidArgument(_))
    ));
    let mut poisoned = separable_set(2, 0);
    poisoned[0].input[5] = f32::NAN;
    let err = train(&mut net, &poisoned, None, &TrainConfig::default()).unwrap_err();
    assert!(matches!(
        err,
        Error::TrainingDiverged {
            epoch: 1,
            batch: 1,
            ..
        }
    ));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn dev_split_selects_best_weights() {
    let data = separable_set(8, 21);
    let dev = separable_set(4, 22);
    let cfg = TrainConfig {
        epochs: 3,
        stop_when_perfect: false,
        ..TrainConfig::default()
    };
    let mut net = Network::<f32>::standard(5).unwrap();
    let report = train(&mut net, &data, Some(&dev), &cfg).unwrap();
    let best = report
        .history
        .iter()
        .min_by(|a, b| a.dev_loss.unwrap().total_cmp(&b.dev_loss.unwrap()))
        .unwrap();
    assert_eq!(report.selected_epoch, best.epoch);
    let (loss, _) = evaluate(&net, &dev).unwrap();
    assert!((loss - best.dev_loss.unwrap()).abs() < 1e-9);
}

#[test]
fn feature_tap_properties() {
    let mut net = Network::<f32>::standard(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = banded_matrix(&mut rng, 0, 256);
    let f = net.extract_feature(&x, FeatureReduce::Mean).unwrap();
    assert_eq!(f.len(), 768);
    assert!(f.iter().all(|v| v.is_finite()));

    let mut perturbed = x.clone();
    perturbed[40 * BINS..41 * BINS]
        .iter_mut()
        .for_each(|v| *v += 5.0);
    assert_ne!(
        net.extract_feature(&perturbed, FeatureReduce::Mean)
            .unwrap(),
        f
    );

    let fc = net.layers().len() - 2;
    net.layers_mut()[fc]
        .weights
        .iter_mut()
        .for_each(|w| *w = 1.0);
    assert_eq!(net.extract_feature(&x, FeatureReduce::Mean).unwrap(), f);

    let max = net.extract_feature(&x, FeatureReduce::Max).unwrap();
    assert!(max.iter().zip(&f).all(|(m, a)| m >= a));

    let tap = net.feature_layer().unwrap();
    net.layers_mut()[tap]
        .weights
        .iter_mut()
        .for_each(|w| *w = 0.0);
    net.layers_mut()[tap].bias.iter_mut().for_each(|b| *b = 0.0);
    assert!(net
        .extract_feature(&x, FeatureReduce::Mean)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn checkpoint_round_trip_and_tamper_detection() {
    let net = Network::<f32>::standard(6).unwrap();
    let bytes = checkpoint_bytes(&net, Plane::XT);
    let origin = std::path::Path::new("net.iinn");
    let (plane, back) = checkpoint_from_bytes(&bytes, origin).unwrap();
    assert_eq!(plane, Plane::XT);
    assert_eq!(back, net);
    let mut bad = bytes.clone();
    bad[1] = b'X';
    match checkpoint_from_bytes(&bad, origin) {
        Err(Error::Format { path, .. }) => assert_eq!(path, origin),
        other => panic!("expected a format error, got {other:?}"),
    }
    assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 3], origin).is_err());
}
