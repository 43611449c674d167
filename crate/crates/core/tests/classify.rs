use iipad_core::classify::{concat_features, train_svm, PlaneFeature, SvmModel, SvmOptions};
use iipad_core::ingest::Label;
use iipad_core::tophist::Plane;
use iipad_core::Error;
use proptest::prelude::*;

mod common;
use common::*;

fn tight(c: f64) -> SvmOptions {
    SvmOptions {
        c,
        tolerance: 1e-13,
        max_passes: 200_000,
        ..SvmOptions::default()
    }
}

#[test]
fn toy_separable_problem() {
    let xs = vec![
        vec![2.0, 2.0],
        vec![3.0, 1.5],
        vec![-2.0, -1.0],
        vec![-1.5, -3.0],
    ];
    let ls = vec![
        Label::BonaFide,
        Label::BonaFide,
        Label::Attack,
        Label::Attack,
    ];
    let m = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
    assert!(m.duality_gap <= 1e-6);
    for (x, &l) in xs.iter().zip(&ls) {
        assert!(y(l) * m.score(x).unwrap() > 0.0);
    }
    assert!(m.score(&[10.0, 10.0]).unwrap() > 0.0);
    assert!(m.score(&[-10.0, -10.0]).unwrap() < 0.0);
}

#[test]
fn matches_reference_objective() {
    for (seed, c) in [(1, 0.1), (2, 1.0), (3, 10.0)] {
        let (xs, ls) = gaussian_blobs(24, 4, 0.6, seed);
        let m = train_svm(
            &xs,
            &ls,
            &SvmOptions {
                c,
                ..SvmOptions::default()
            },
        )
        .unwrap();
        let ours = m.objective(&xs, &ls).unwrap();
        let (ref_primal, ref_dual) = reference_objectives(&xs, &ls, c);
        assert!(
            ref_primal - ref_dual < 1e-4,
            "reference not converged: {ref_primal} vs {ref_dual}"
        );
        assert!(
            ours <= ref_primal + 1e-5,
            "C={c}: {ours} vs reference {ref_primal}"
        );
        assert!(
            ours >= ref_dual - 1e-5,
            "C={c}: {ours} below dual bound {ref_dual}"
        );
        assert!(ours <= subgradient_objective(&xs, &ls, c) + 1e-5);
    }
}

#[test]
fn duplicating_data_with_half_c_gives_same_model() {
    let (xs, ls) = gaussian_blobs(20, 3, 0.5, 7);
    let a = train_svm(&xs, &ls, &tight(2.0)).unwrap();
    let xs2: Vec<Vec<f64>> = xs.iter().chain(&xs).cloned().collect();
    let ls2: Vec<Label> = ls.iter().chain(&ls).copied().collect();
    let b = train_svm(&xs2, &ls2, &tight(1.0)).unwrap();
    for (p, q) in a.weights.iter().zip(&b.weights) {
        assert!((p - q).abs() < 1e-6, "{p} vs {q}");
    }
    assert!((a.bias - b.bias).abs() < 1e-6);
}

#[test]
fn score_is_affine() {
    let (xs, ls) = gaussian_blobs(16, 5, 1.0, 9);
    let m = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
    let (p, q) = (&xs[0], &xs[3]);
    for a in [-1.5, 0.0, 0.3, 1.0, 2.0] {
        let mix: Vec<f64> = p
            .iter()
            .zip(q)
            .map(|(u, v)| a * u + (1.0 - a) * v)
            .collect();
        let expected = a * m.score(p).unwrap() + (1.0 - a) * m.score(q).unwrap();
        assert!((m.score(&mix).unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn standardized_training_set_is_unit_variance() {
    let (mut xs, ls) = gaussian_blobs(30, 4, 1.0, 4);
    xs.iter_mut().for_each(|x| x.push(7.5));
    let m = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
    let z: Vec<Vec<f64>> = xs.iter().map(|x| m.standardize(x).unwrap()).collect();
    let n = z.len() as f64;
    for j in 0..5 {
        let mean = z.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = z.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        if j < 4 {
            assert!((var - 1.0).abs() < 1e-9);
        } else {
            assert_eq!(var, 0.0);
            assert_eq!(m.scale[j], 1.0);
        }
    }
}

#[test]
fn invalid_training_inputs() {
    let xs = vec![vec![1.0], vec![2.0]];
    let one_class = vec![Label::Attack, Label::Attack];
    assert!(matches!(
        train_svm(&xs, &one_class, &SvmOptions::default()),
        Err(Error::InvalidArgument(_))
    ));
    let ls = vec![Label::Attack, Label::BonaFide];
    let bad_c = SvmOptions {
        c: 0.0,
        ..SvmOptions::default()
    };
    assert!(train_svm(&xs, &ls, &bad_c).is_err());
    let ragged = vec![vec![1.0], vec![2.0, 3.0]];
    assert!(matches!(
        train_svm(&ragged, &ls, &SvmOptions::default()),
        Err(Error::Dimension { .. })
    ));
    let m = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
    assert!(matches!(
        m.score(&[1.0, 2.0]),
        Err(Error::Dimension {
            expected: 1,
            actual: 2
        })
    ));
}

#[test]
fn model_file_round_trip() {
    let (xs, ls) = gaussian_blobs(10, 3, 1.0, 5);
    let m = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("svm.iisv");
    m.save(&path).unwrap();
    let back = SvmModel::load(&path).unwrap();
    assert_eq!(back.weights, m.weights);
    assert_eq!(back.bias, m.bias);
    assert_eq!(back.score(&xs[0]).unwrap(), m.score(&xs[0]).unwrap());
    let mut bytes = m.to_bytes();
    bytes.pop();
    assert!(matches!(
        SvmModel::from_bytes(&bytes, &path),
        Err(Error::Format { .. })
    ));
}

#[test]
fn features_concatenate_in_plane_order() {
    let f = |plane, v: f64| PlaneFeature {
        plane,
        values: vec![v; 3],
    };
    let features = vec![f(Plane::YT, 3.0), f(Plane::XY, 1.0), f(Plane::XT, 2.0)];
    let all = concat_features(&features, &[Plane::YT, Plane::XT, Plane::XY]).unwrap();
    assert_eq!(all.planes, vec![Plane::XY, Plane::XT, Plane::YT]);
    assert_eq!(
        all.values,
        vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0]
    );
    let two = concat_features(&features, &[Plane::YT, Plane::XT]).unwrap();
    assert_eq!(two.values, vec![2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
    assert!(concat_features(&features[..1], &[Plane::XT]).is_err());
    assert!(concat_features(&features, &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimality_on_random_data(seed in 0u64..1000, c in 0.05f64..5.0, shift in 0.0f64..2.0) {
        let (xs, ls) = gaussian_blobs(14, 3, shift, seed);
        let m = train_svm(&xs, &ls, &SvmOptions { c, ..SvmOptions::default() }).unwrap();
        prop_assert!(m.duality_gap <= 1e-6);
        let ours = m.objective(&xs, &ls).unwrap();
        let (ref_primal, ref_dual) = reference_objectives(&xs, &ls, c);
        prop_assert!(ours <= ref_primal + 1e-5);
        prop_assert!(ours >= ref_dual - 1e-5);
    }

    #[test]
    fn training_is_deterministic(seed in 0u64..1000) {
        let (xs, ls) = gaussian_blobs(12, 4, 0.8, seed);
        let a = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
        let b = train_svm(&xs, &ls, &SvmOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
