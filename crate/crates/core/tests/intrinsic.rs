use iipad_core::ingest::{convert_color, ColorSpace, Frame};
use iipad_core::intrinsic::{
    build_pyramid, chroma_planes, cluster_labels, collapse_pyramid, compute_band_statistics,
    dc_objective, decompose, luminance, optimize_dc, pearson, reconstruct_shading_reflectance,
    reconstruct_with_weights, DecomposeConfig, Gate, DC_LIMIT, LUMINANCE_FLOOR,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

const N: usize = 150;

fn log_luminance(frame: &Frame) -> Vec<f64> {
    luminance(frame)
        .iter()
        .map(|v| v.max(LUMINANCE_FLOOR).ln())
        .collect()
}

#[test]
fn round_trip_on_random_planes() {
    for seed in 0..10 {
        let x = random_plane(seed);
        let p = build_pyramid(&x, N, N, 3, 4).unwrap();
        let y = collapse_pyramid(&p).unwrap();
        assert!(max_abs_diff(&x, &y) < 1e-6, "seed {seed}");
    }
}

#[test]
fn round_trip_on_other_geometries() {
    for (w, h, s, k) in [(64, 48, 2, 2), (33, 70, 4, 6), (150, 150, 1, 1)] {
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen()).collect();
        let y = collapse_pyramid(&build_pyramid(&x, w, h, s, k).unwrap()).unwrap();
        assert!(max_abs_diff(&x, &y) < 1e-6);
    }
}

#[test]
fn impulse_round_trip() {
    let mut x = vec![0.0; N * N];
    x[75 * N + 75] = 1.0;
    let y = collapse_pyramid(&build_pyramid(&x, N, N, 3, 4).unwrap()).unwrap();
    assert!(max_abs_diff(&x, &y) < 1e-6);
}

#[test]
fn horizontal_sinusoid_lands_in_first_orientation() {
    // Period 6 px sits inside the finest band-pass octave.
    let x: Vec<f64> = (0..N * N)
        .map(|i| (std::f64::consts::TAU * (i % N) as f64 / 6.0).cos())
        .collect();
    let p = build_pyramid(&x, N, N, 3, 4).unwrap();
    let energy = |k: usize| -> f64 {
        (0..3)
            .map(|s| p.band(s, k).data.iter().map(|v| v * v).sum::<f64>())
            .sum()
    };
    assert!(
        energy(0) >= 5.0 * energy(2),
        "{} vs {}",
        energy(0),
        energy(2)
    );
}

#[test]
fn doubling_bands_doubles_output() {
    let x = random_plane(42);
    let mut p = build_pyramid(&x, N, N, 3, 4).unwrap();
    let base = collapse_pyramid(&p).unwrap();
    for b in p.bands_mut() {
        b.data.iter_mut().for_each(|v| *v *= 2.0);
    }
    p.highpass_mut().iter_mut().for_each(|v| *v *= 2.0);
    p.lowpass_mut().iter_mut().for_each(|v| *v *= 2.0);
    let doubled = collapse_pyramid(&p).unwrap();
    for (a, b) in base.iter().zip(&doubled) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn achromatic_gradient_has_no_reflectance_cue() {
    let frame = Frame::from_fn(N, N, ColorSpace::Rgb, |x, y| {
        let v = 0.2 + 0.6 * (x + y) as f64 / (2 * N) as f64;
        [v, v, v]
    })
    .unwrap();
    let hsv = convert_color(&frame, ColorSpace::Hsv).unwrap();
    let p = build_pyramid(&log_luminance(&hsv), N, N, 3, 4).unwrap();
    let [a, b] = chroma_planes(&hsv);
    let stats = compute_band_statistics(&p, [&a, &b]).unwrap();
    assert!(stats.hue.iter().flatten().all(|&v| v == 0.0));
    assert!(stats.bands.iter().all(|b| b.c_ref == 0.0));
}

#[test]
fn constant_frame_statistics_vanish() {
    let frame = Frame::constant(N, N, ColorSpace::Rgb, [0.4, 0.3, 0.2]).unwrap();
    let p = build_pyramid(&log_luminance(&frame), N, N, 3, 4).unwrap();
    let [a, b] = chroma_planes(&frame);
    let stats = compute_band_statistics(&p, [&a, &b]).unwrap();
    for band in &stats.bands {
        assert!(band.amplitude.iter().all(|v| v.abs() < 1e-12));
        assert!(band.texture.iter().all(|v| v.abs() < 1e-12));
        assert_eq!((band.c_shd, band.c_ref), (0.0, 0.0));
    }
    assert!(stats.hue.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn colocated_chroma_texture_favours_reflectance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Sparse colored blobs on a neutral, smoothly lit background.
    let blobs: Vec<(f64, f64, f64)> = (0..40)
        .map(|_| {
            (
                rng.gen_range(0.0..N as f64),
                rng.gen_range(0.0..N as f64),
                rng.gen_range(2.0..4.0),
            )
        })
        .collect();
    let frame = Frame::from_fn(N, N, ColorSpace::Rgb, |x, y| {
        let t: f64 = blobs
            .iter()
            .map(|&(bx, by, r)| {
                (-((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (2.0 * r * r)).exp()
            })
            .sum::<f64>()
            .min(1.0);
        let light = 0.5 + 0.4 * x as f64 / N as f64;
        [
            light * (0.6 + 0.3 * t),
            light * (0.6 - 0.3 * t),
            light * 0.6,
        ]
    })
    .unwrap();
    let p = build_pyramid(&log_luminance(&frame), N, N, 3, 4).unwrap();
    let [a, b] = chroma_planes(&frame);
    let stats = compute_band_statistics(&p, [&a, &b]).unwrap();
    let dominant = stats
        .bands
        .iter()
        .max_by(|x, y| {
            let e = |b: &iipad_core::intrinsic::BandStat| {
                b.amplitude.iter().map(|v| v * v).sum::<f64>()
            };
            e(x).total_cmp(&e(y))
        })
        .unwrap();
    assert!(
        dominant.c_ref > dominant.c_shd,
        "{} vs {}",
        dominant.c_ref,
        dominant.c_shd
    );
}

#[test]
fn correlations_match_independent_pearson() {
    let (frame, _) = synthetic_frames(1).pop().unwrap();
    let p = build_pyramid(&log_luminance(&frame), N, N, 3, 4).unwrap();
    let [a, b] = chroma_planes(&frame);
    let stats = compute_band_statistics(&p, [&a, &b]).unwrap();
    let reference = |x: &[f64], y: &[f64]| {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    };
    for band in &stats.bands {
        let s = band.scale;
        assert!((band.c_shd - reference(&band.amplitude, &stats.luminance[s])).abs() < 1e-9);
        assert!((band.c_ref - reference(&band.amplitude, &stats.hue[s])).abs() < 1e-9);
        assert!((-1.0..=1.0).contains(&band.c_shd) && (-1.0..=1.0).contains(&band.c_ref));
    }
    assert_eq!(pearson(&[1.0, 2.0], &[3.0, 3.0]), 0.0);
}

#[test]
fn saturated_gate_sends_all_bands_to_shading() {
    let x = random_plane(7);
    let p = build_pyramid(&x, N, N, 3, 4).unwrap();
    let (log_s, log_r) = reconstruct_with_weights(&p, &[1.0; 12]).unwrap();
    let mut highpass_only = p.clone();
    for b in highpass_only.bands_mut() {
        b.data.iter_mut().for_each(|v| *v = 0.0);
    }
    highpass_only
        .lowpass_mut()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    let expected_r = collapse_pyramid(&highpass_only).unwrap();
    assert!(max_abs_diff(&log_r, &expected_r) < 1e-12);
    let sum: Vec<f64> = log_s.iter().zip(&log_r).map(|(a, b)| a + b).collect();
    assert!(max_abs_diff(&sum, &x) < 1e-9);
    assert_eq!(Gate::Soft { sharpness: 1e6 }.weight(1.0, -1.0), 1.0);
}

#[test]
fn equal_correlations_split_bands_evenly() {
    let x = random_plane(8);
    let p = build_pyramid(&x, N, N, 3, 4).unwrap();
    let (log_s, log_r) = reconstruct_with_weights(&p, &[0.5; 12]).unwrap();
    let mut bands_only = p.clone();
    bands_only.highpass_mut().iter_mut().for_each(|v| *v = 0.0);
    bands_only.lowpass_mut().iter_mut().for_each(|v| *v = 0.0);
    let bands = collapse_pyramid(&bands_only).unwrap();
    let mut low = p.clone();
    for b in low.bands_mut() {
        b.data.iter_mut().for_each(|v| *v = 0.0);
    }
    low.highpass_mut().iter_mut().for_each(|v| *v = 0.0);
    let low = collapse_pyramid(&low).unwrap();
    for i in 0..N * N {
        assert!((log_s[i] - low[i] - 0.5 * bands[i]).abs() < 1e-9);
    }
    let sum: Vec<f64> = log_s.iter().zip(&log_r).map(|(a, b)| a + b).collect();
    assert!(max_abs_diff(&sum, &x) < 1e-9);
}

/// Four hue patches under a smooth illumination ramp.
fn patch_frame(seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tones: Vec<[f64; 3]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(0.2..0.9),
                rng.gen_range(0.2..0.9),
                rng.gen_range(0.2..0.9),
            ]
        })
        .collect();
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    Frame::from_fn(N, N, ColorSpace::Rgb, |x, y| {
        let tone = tones[(x * 2 / N) * 2 + y * 2 / N];
        let (u, v) = (x as f64 / N as f64 - 0.5, y as f64 / N as f64 - 0.5);
        let light = 0.7 + 0.25 * (angle.cos() * u + angle.sin() * v);
        tone.map(|c| c * light)
    })
    .unwrap()
}

#[test]
fn dc_choice_beats_every_probe() {
    for frame in (0..4).map(patch_frame) {
        let log_l = log_luminance(&frame);
        let p = build_pyramid(&log_l, N, N, 3, 4).unwrap();
        let [a, b] = chroma_planes(&frame);
        let stats = compute_band_statistics(&p, [&a, &b]).unwrap();
        let (log_s, log_r) = reconstruct_shading_reflectance(&p, &stats, Gate::default()).unwrap();
        let out = optimize_dc(&log_s, &log_r, &frame).unwrap();
        assert!(out.v_dc.abs() <= DC_LIMIT);
        let labels = cluster_labels(&frame);
        let at = |v: f64| dc_objective(&log_s, &frame, &labels, v);
        let chosen = at(out.v_dc);
        for i in 0..21 {
            let v = -DC_LIMIT + 2.0 * DC_LIMIT * i as f64 / 20.0;
            assert!(chosen <= at(v) * (1.0 + 1e-12), "probe {v}");
        }
        assert!(chosen < at(0.0));
        for ((s, r), l) in out.log_shading.iter().zip(&out.log_reflectance).zip(&log_l) {
            assert!((s + r - l).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_frame_factorizes_trivially() {
    let v = 0.37;
    let frame = Frame::constant(N, N, ColorSpace::Rgb, [v; 3]).unwrap();
    let d = decompose(&frame, &DecomposeConfig::default()).unwrap();
    assert_eq!(d.v_dc, 0.0);
    assert!(d.shading.iter().all(|s| (s - v).abs() < 1e-9));
    assert!(d.reflectance_raw.iter().all(|r| (r - 1.0).abs() < 1e-9));
}

#[test]
fn identity_and_quality_on_synthetic_frames() {
    let mut total = 0.0;
    let frames = synthetic_frames(20);
    for (frame, albedo) in &frames {
        let d = decompose(frame, &DecomposeConfig::default()).unwrap();
        assert!(d.shading.iter().all(|&s| s > 0.0));
        for (px, (r, s)) in frame
            .data()
            .chunks_exact(3)
            .zip(d.reflectance_raw.chunks_exact(3).zip(&d.shading))
        {
            for c in 0..3 {
                assert!((s * r[c] - px[c]).abs() <= 1e-6);
            }
        }
        total += pearson(&d.reflectance_luminance(), albedo);
    }
    let mean = total / frames.len() as f64;
    assert!(mean >= 0.9, "mean correlation {mean}");
}

#[test]
fn identity_holds_in_every_color_space() {
    let (frame, _) = synthetic_frames(1).pop().unwrap();
    for cs in [ColorSpace::Hsv, ColorSpace::YCbCr] {
        let converted = convert_color(&frame, cs).unwrap();
        let d = decompose(&converted, &DecomposeConfig::default()).unwrap();
        for (px, (r, s)) in converted
            .data()
            .chunks_exact(3)
            .zip(d.reflectance_raw.chunks_exact(3).zip(&d.shading))
        {
            for c in 0..3 {
                assert!((s * r[c] - px[c]).abs() <= 1e-6);
            }
        }
        let clamped = d.reflectance();
        let (lo, hi) = clamped.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
    }
}

#[test]
fn hard_gate_weights_are_binary() {
    let (frame, _) = synthetic_frames(1).pop().unwrap();
    let cfg = DecomposeConfig {
        gate: Gate::Hard,
        ..DecomposeConfig::default()
    };
    let d = decompose(&frame, &cfg).unwrap();
    assert!(d
        .band_weights
        .iter()
        .all(|&w| w == 0.0 || w == 0.5 || w == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn brightness_scaling_moves_into_shading(seed in 0u64..1000, double in any::<bool>()) {
        let alpha = if double { 2.0 } else { 0.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..N * N * 3).map(|_| rng.gen_range(0.05..0.45)).collect();
        let frame = Frame::new(N, N, ColorSpace::Rgb, data.clone()).unwrap();
        let scaled = Frame::new(N, N, ColorSpace::Rgb, data.iter().map(|v| v * alpha).collect()).unwrap();
        let cfg = DecomposeConfig::default();
        let (a, b) = (decompose(&frame, &cfg).unwrap(), decompose(&scaled, &cfg).unwrap());
        for (sa, sb) in a.shading.iter().zip(&b.shading) {
            prop_assert!((sb / sa - alpha).abs() < 1e-9);
        }
        prop_assert!(max_abs_diff(&a.reflectance_raw, &b.reflectance_raw) < 1e-9);
    }

    #[test]
    fn log_split_is_additive(seed in 0u64..1000) {
        let x = random_plane(seed);
        let p = build_pyramid(&x, N, N, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let w: Vec<f64> = (0..12).map(|_| rng.gen()).collect();
        let (s, r) = reconstruct_with_weights(&p, &w).unwrap();
        for i in 0..N * N {
            prop_assert!((s[i] + r[i] - x[i]).abs() < 1e-9);
        }
    }
}
