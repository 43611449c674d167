//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use iipad_core::classify::fit_standardization;
use iipad_core::cnn::{Grads, LayerKind, Network, Sample};
use iipad_core::ingest::{ColorSpace, Frame, FrameSequence, Label};
use iipad_core::synth::{gen_sequence, MaterialClass, SynthParams};
use iipad_core::tophist::{Plane, ROW_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Input length and width of the standard network.
pub const LEN: usize = 75;
pub const BINS: usize = 768;
/// Frame side used by the decomposition checks.
pub const SIDE: usize = 150;

pub fn random_plane(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SIDE * SIDE).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn synthetic_frames(count: usize) -> Vec<(Frame, Vec<f64>)> {
    let params = SynthParams {
        frames: 2,
        ..SynthParams::default()
    };
    (0..count)
        .map(|i| {
            let class = if i % 2 == 0 {
                MaterialClass::skin_like()
            } else {
                MaterialClass::mask_like()
            };
            let (seq, gt) = gen_sequence(&class, &params, 100 + i as u64).unwrap();
            (seq.frames()[1].clone(), gt.albedo_luminance())
        })
        .collect()
}

pub fn sequence(frames: Vec<Frame>) -> FrameSequence {
    FrameSequence::new(frames, "s00", Label::BonaFide, "test").unwrap()
}

pub fn random_sequence(seed: u64, t: usize, n: usize) -> FrameSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sequence(
        (0..t)
            .map(|_| {
                Frame::new(
                    n,
                    n,
                    ColorSpace::Rgb,
                    (0..n * n * 3).map(|_| rng.gen()).collect(),
                )
                .unwrap()
            })
            .collect(),
    )
}

/// Straightforward per-pixel counting over explicitly gathered slices.
pub fn oracle(seq: &FrameSequence, plane: Plane) -> Vec<f64> {
    let frames = seq.frames();
    let (w, h) = (frames[0].width(), frames[0].height());
    let slices: Vec<Vec<[f64; 3]>> = match plane {
        Plane::XY => frames
            .iter()
            .map(|f| {
                (0..h)
                    .flat_map(|y| (0..w).map(move |x| (x, y)))
                    .map(|(x, y)| f.pixel(x, y))
                    .collect()
            })
            .collect(),
        Plane::XT => (0..h)
            .step_by(2)
            .map(|y| {
                frames
                    .iter()
                    .flat_map(|f| (0..w).map(move |x| f.pixel(x, y)))
                    .collect()
            })
            .collect(),
        Plane::YT => (0..w)
            .step_by(2)
            .map(|x| {
                frames
                    .iter()
                    .flat_map(|f| (0..h).map(move |y| f.pixel(x, y)))
                    .collect()
            })
            .collect(),
    };
    let mut out = Vec::new();
    for slice in slices {
        let mut row = vec![0.0; ROW_LEN];
        for px in slice {
            for c in 0..3 {
                let mut bin = 0;
                while bin < 255 && px[c] * 255.0 + 0.5 >= (bin + 1) as f64 {
                    bin += 1;
                }
                row[c * 256 + bin] += 1.0;
            }
        }
        out.extend(row);
    }
    out
}

pub fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Probability-normalized rows with all mass in a band of bins per channel.
pub fn banded_matrix(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<f32> {
    let mut m = vec![0.0f32; LEN * BINS];
    for t in 0..LEN {
        for c in 0..3 {
            let seg = &mut m[t * BINS + c * 256..t * BINS + (c + 1) * 256];
            for _ in 0..200 {
                seg[rng.gen_range(lo..hi)] += 1.0 / 200.0;
            }
        }
    }
    m
}

pub fn separable_set(n: usize, seed: u64) -> Vec<Sample<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let (lo, hi) = if label == 0 { (5, 60) } else { (190, 250) };
            Sample {
                input: banded_matrix(&mut rng, lo, hi),
                label,
            }
        })
        .collect()
}

/// Small network that still uses every layer type at least once.
pub fn small_layers() -> Vec<LayerKind> {
    let conv = |kernel, i, o, pad| LayerKind::Conv {
        kernel,
        in_channels: i,
        out_channels: o,
        pad,
    };
    vec![
        conv(3, 1, 3, 1),
        LayerKind::Relu,
        LayerKind::AvgPool,
        conv(3, 3, 4, 1),
        LayerKind::Relu,
        LayerKind::AvgPool,
        conv(2, 4, 3, 0),
        LayerKind::Relu,
        conv(1, 3, 3, 0),
        LayerKind::Transpose,
        LayerKind::FullyConnected { outputs: 2 },
        LayerKind::SoftMax,
    ]
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

pub fn gradient_check(kinds: &[LayerKind], len: usize, bins: usize, seed: u64) -> f64 {
    let mut net = Network::<f64>::new(kinds, len, bins, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    // Nonzero biases so every parameter gets a generic gradient.
    for l in net.layers_mut() {
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-0.2..0.2));
    }
    let x = random_input(&mut rng, len * bins);
    let label = 1;
    let fwd = net.forward(&x).unwrap();
    let mut grads = Grads::zeros_like(&net);
    let dx = net.backward(&fwd, label, &mut grads, true);
    let loss_at =
        |n: &Network<f64>, input: &[f64]| Network::loss(&n.forward(input).unwrap(), label);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for li in 0..net.layers().len() {
        for which in 0..2 {
            let count = if which == 0 {
                net.layers()[li].weights.len()
            } else {
                net.layers()[li].bias.len()
            };
            for j in 0..count {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let p = if which == 0 {
                    &mut plus.layers_mut()[li].weights
                } else {
                    &mut plus.layers_mut()[li].bias
                };
                p[j] += h;
                let m = if which == 0 {
                    &mut minus.layers_mut()[li].weights
                } else {
                    &mut minus.layers_mut()[li].bias
                };
                m[j] -= h;
                let numeric = (loss_at(&plus, &x) - loss_at(&minus, &x)) / (2.0 * h);
                let analytic = if which == 0 {
                    grads.layers[li].0[j]
                } else {
                    grads.layers[li].1[j]
                };
                worst = worst.max(relative_error(analytic, numeric));
            }
        }
    }
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        let numeric = (loss_at(&net, &xp) - loss_at(&net, &xm)) / (2.0 * h);
        worst = worst.max(relative_error(dx[i], numeric));
    }
    worst
}

pub fn y(l: Label) -> f64 {
    if l == Label::BonaFide {
        1.0
    } else {
        -1.0
    }
}

pub fn gaussian_blobs(n: usize, d: usize, shift: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for i in 0..n {
        let label = if i % 2 == 0 {
            Label::BonaFide
        } else {
            Label::Attack
        };
        let x: Vec<f64> = (0..d)
            .map(|j| {
                rng.gen_range(-1.0..1.0)
                    + if j == 0 { y(label) * shift } else { 0.0 }
                    + 3.0 * j as f64
            })
            .collect();
        xs.push(x);
        ls.push(label);
    }
    (xs, ls)
}

/// Reference solver: accelerated projected gradient on the box-constrained
/// dual over the same standardized, bias-augmented data. Returns the primal
/// objective of the recovered weights and the dual objective.
pub fn reference_objectives(xs: &[Vec<f64>], ls: &[Label], c: f64) -> (f64, f64) {
    let (mean, scale) = fit_standardization(xs);
    let z: Vec<Vec<f64>> = xs
        .iter()
        .zip(ls)
        .map(|(x, &l)| {
            let mut v: Vec<f64> = x
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((a, m), s)| y(l) * (a - m) / s)
                .collect();
            v.push(y(l));
            v
        })
        .collect();
    let n = z.len();
    let dim = z[0].len();
    let q = |i: usize, j: usize| -> f64 { z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum() };
    let qm: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| q(i, j)).collect()).collect();
    let lipschitz: f64 = (0..n).map(|i| qm[i][i]).sum();
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| qm[i].iter().zip(a).map(|(q, a)| q * a).sum::<f64>() - 1.0)
            .collect()
    };
    let mut alpha = vec![0.0; n];
    let mut momentum_point = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = grad(&momentum_point);
        let next: Vec<f64> = momentum_point
            .iter()
            .zip(&g)
            .map(|(p, g)| (p - g / lipschitz).clamp(0.0, c))
            .collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        momentum_point = next
            .iter()
            .zip(&alpha)
            .map(|(a, prev)| a + (t - 1.0) / t_next * (a - prev))
            .collect();
        alpha = next;
        t = t_next;
    }
    let mut w = vec![0.0; dim];
    for (a, v) in alpha.iter().zip(&z) {
        w.iter_mut().zip(v).for_each(|(wj, vj)| *wj += a * vj);
    }
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let hinge: f64 = z
        .iter()
        .map(|v| (1.0 - v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
        .sum();
    (0.5 * ww + c * hinge, alpha.iter().sum::<f64>() - 0.5 * ww)
}

/// Plain subgradient descent on the primal with a decaying step.
pub fn subgradient_objective(xs: &[Vec<f64>], ls: &[Label], c: f64) -> f64 {
    let (mean, scale) = fit_standardization(xs);
    let d = xs[0].len();
    let mut w = vec![0.0; d + 1];
    let mut best = f64::INFINITY;
    let augmented: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let mut v: Vec<f64> = x
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((a, m), s)| (a - m) / s)
                .collect();
            v.push(1.0);
            v
        })
        .collect();
    for k in 0..20_000 {
        let mut g = w.clone();
        let mut hinge = 0.0;
        for (v, &l) in augmented.iter().zip(ls) {
            let margin = y(l) * v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if margin < 1.0 {
                hinge += 1.0 - margin;
                g.iter_mut()
                    .zip(v)
                    .for_each(|(gj, vj)| *gj -= c * y(l) * vj);
            }
        }
        let obj = 0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge;
        best = best.min(obj);
        let step = 0.5 / (1.0 + k as f64).sqrt() / (1.0 + c * xs.len() as f64);
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= step * gj);
    }
    best
}

/// Direct sweep over every candidate threshold with plain counting.
pub fn eer_oracle(bona: &[f64], attack: &[f64]) -> (f64, f64) {
    let mut all: Vec<f64> = bona.iter().chain(attack).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut taus = vec![f64::NEG_INFINITY];
    for i in 1..all.len() {
        taus.push((all[i - 1] + all[i]) / 2.0);
    }
    taus.push(f64::INFINITY);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &tau in &taus {
        let far = attack.iter().filter(|&&s| s >= tau).count() as f64 / attack.len() as f64;
        let frr = bona.iter().filter(|&&s| s < tau).count() as f64 / bona.len() as f64;
        let d = (far - frr).abs();
        if d < best.0 {
            best = (d, tau, (far + frr) / 2.0);
        }
    }
    (best.2, best.1)
}

pub fn auc_oracle(bona: &[f64], attack: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &b in bona {
        for &a in attack {
            wins += if b > a {
                1.0
            } else if b == a {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (bona.len() * attack.len()) as f64
}

pub fn random_scores(seed: u64, n: usize, quantize: bool) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bona = Vec::new();
    let mut attack = Vec::new();
    for i in 0..n {
        let mut s: f64 = rng.gen_range(-1.0..1.0);
        if quantize {
            s = (s * 8.0).round() / 8.0;
        }
        if i % 2 == 0 {
            bona.push(s + 0.3);
        } else {
            attack.push(s);
        }
    }
    (bona, attack)
}
