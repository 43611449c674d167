//! Synthetic Lambertian face clips with known albedo and illumination.
//!
//! A clip is a textured ellipse ("face") on a flat background of the same
//! base tone, lit by a smooth linear illumination ramp whose mean level and
//! direction drift over time:
//!
//! ```text
//! I_t = A * L_t + k * L_t^p        (clamped to [0, 1])
//! ```
//!
//! Skin-like material has strong, slightly chromatic high-frequency albedo
//! texture and no specular term. Mask-like material is almost uniform but
//! adds an achromatic specular lobe `k L^p`, which makes its brightness
//! react more strongly to the illumination drift.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{
    write_png8, ColorSpace, DatasetManifest, Frame, FrameSequence, Label, ManifestEntry,
};
use crate::intrinsic::blur_plane;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Material {
    SkinLike,
    MaskLike,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialClass {
    pub tag: Material,
    /// Standard deviation of the relative albedo modulation.
    pub texture_amplitude: f64,
    pub specular_gain: f64,
    /// Exponent `p` of the specular lobe `k L^p`.
    pub sensitivity_exponent: f64,
}

impl MaterialClass {
    pub fn skin_like() -> Self {
        MaterialClass {
            tag: Material::SkinLike,
            texture_amplitude: 0.15,
            specular_gain: 0.0,
            sensitivity_exponent: 4.0,
        }
    }

    pub fn mask_like() -> Self {
        MaterialClass {
            tag: Material::MaskLike,
            texture_amplitude: 0.02,
            specular_gain: 0.3,
            sensitivity_exponent: 4.0,
        }
    }

    pub fn label(&self) -> Label {
        match self.tag {
            Material::SkinLike => Label::BonaFide,
            Material::MaskLike => Label::Attack,
        }
    }
}

/// All generator constants.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub size: usize,
    pub frames: usize,
    pub base_tone: [f64; 3],
    /// Per-channel gain of the texture, so texture also moves chroma.
    pub chroma_gain: [f64; 3],
    /// Texture is white noise band-passed by a difference of Gaussians.
    pub texture_sigmas: (f64, f64),
    /// Face ellipse semi-axes as fractions of the frame side (x, y).
    pub face_axes: (f64, f64),
    pub light_mean: f64,
    /// Amplitude of the slow sinusoidal drift of the mean level.
    pub light_drift: f64,
    /// Illumination change across the frame along the ramp direction.
    pub light_slope: f64,
    /// Total rotation of the ramp direction over the clip, radians.
    pub light_rotation: f64,
    /// Standard deviation of per-frame mean-level jitter.
    pub light_jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 150,
            frames: 75,
            base_tone: [0.62, 0.48, 0.40],
            chroma_gain: [1.0, 0.75, 0.5],
            texture_sigmas: (1.0, 3.0),
            face_axes: (0.46, 0.52),
            light_mean: 0.65,
            light_drift: 0.08,
            light_slope: 0.25,
            light_rotation: 1.0,
            light_jitter: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub size: usize,
    /// Row-major, interleaved RGB.
    pub albedo: Vec<f64>,
    /// One row-major plane per frame.
    pub illumination: Vec<Vec<f64>>,
    /// Rendered values before clamping, interleaved RGB, per frame.
    pub unclamped: Vec<Vec<f64>>,
    pub face_mask: Vec<bool>,
    pub clamped_pixels: usize,
}

impl GroundTruth {
    /// Per-pixel channel mean of the albedo.
    pub fn albedo_luminance(&self) -> Vec<f64> {
        self.albedo
            .chunks_exact(3)
            .map(|c| (c[0] + c[1] + c[2]) / 3.0)
            .collect()
    }

    pub fn clamped_fraction(&self) -> f64 {
        let total: usize = self.unclamped.iter().map(Vec::len).sum();
        self.clamped_pixels as f64 / total.max(1) as f64
    }
}

/// Renders one clip. Illumination and texture use separate streams derived
/// from `seed`, so two classes rendered with one seed share the lighting.
pub fn gen_sequence(
    class: &MaterialClass,
    params: &SynthParams,
    seed: u64,
) -> Result<(FrameSequence, GroundTruth)> {
    let n = params.size;
    if n < 2 || params.frames == 0 {
        return Err(Error::invalid(
            "synthetic clips need size >= 2 and at least one frame",
        ));
    }
    let mut light_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tex_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let coord = |i: usize| (i as f64 + 0.5) / n as f64 - 0.5;
    let texture = band_limited_noise(&mut tex_rng, n, params.texture_sigmas);
    let (ax, ay) = params.face_axes;
    let mut face_mask = Vec::with_capacity(n * n);
    let mut albedo = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let (u, v) = (coord(x) / ax, coord(y) / ay);
            let inside = u * u + v * v <= 1.0;
            face_mask.push(inside);
            let t = if inside { texture[y * n + x] } else { 0.0 };
            for c in 0..3 {
                let a = params.base_tone[c]
                    * (1.0 + class.texture_amplitude * params.chroma_gain[c] * t);
                albedo.push(a.clamp(0.0, 1.0));
            }
        }
    }

    let phase: f64 = light_rng.gen_range(0.0..std::f64::consts::TAU);
    let theta0: f64 = light_rng.gen_range(0.0..std::f64::consts::TAU);
    let turn = if light_rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let denom = params.frames.max(2) as f64 - 1.0;

    let mut frames = Vec::with_capacity(params.frames);
    let mut illumination = Vec::with_capacity(params.frames);
    let mut unclamped = Vec::with_capacity(params.frames);
    let mut clamped_pixels = 0;
    for t in 0..params.frames {
        let progress = t as f64 / denom;
        let jitter: f64 = StandardNormal.sample(&mut light_rng);
        let mean = params.light_mean
            + params.light_drift * (std::f64::consts::TAU * progress + phase).sin()
            + params.light_jitter * jitter;
        let theta = theta0 + turn * params.light_rotation * progress;
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut light = Vec::with_capacity(n * n);
        let mut raw = Vec::with_capacity(n * n * 3);
        for y in 0..n {
            for x in 0..n {
                let l = (mean + params.light_slope * (dx * coord(x) + dy * coord(y))).max(0.0);
                light.push(l);
                let spec = class.specular_gain * l.powf(class.sensitivity_exponent);
                let i = (y * n + x) * 3;
                for c in 0..3 {
                    raw.push(albedo[i + c] * l + spec);
                }
            }
        }
        clamped_pixels += raw.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        frames.push(Frame::new(n, n, ColorSpace::Rgb, raw.clone())?);
        illumination.push(light);
        unclamped.push(raw);
    }
    let seq = FrameSequence::new(
        frames,
        "synthetic",
        class.label(),
        format!("synthetic:{seed}"),
    )?;
    Ok((
        seq,
        GroundTruth {
            size: n,
            albedo,
            illumination,
            unclamped,
            face_mask,
            clamped_pixels,
        },
    ))
}

fn band_limited_noise(rng: &mut ChaCha8Rng, n: usize, (fine, coarse): (f64, f64)) -> Vec<f64> {
    let white: Vec<f64> = (0..n * n)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    let a = blur_plane(&white, n, n, fine);
    let b = blur_plane(&white, n, n, coarse);
    let band: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let mean = band.iter().sum::<f64>() / band.len() as f64;
    let std = (band.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / band.len() as f64).sqrt();
    band.iter().map(|v| (v - mean) / std.max(1e-12)).collect()
}

/// Layout of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub num_subjects: usize,
    pub videos_per_subject: usize,
    pub seed: u64,
    pub params: SynthParams,
}

impl DatasetSpec {
    pub fn new(num_subjects: usize, videos_per_subject: usize, seed: u64) -> Self {
        DatasetSpec {
            num_subjects,
            videos_per_subject,
            seed,
            params: SynthParams::default(),
        }
    }

    /// Bona fide clips per subject: two thirds, rounded (10 of 15).
    pub fn bona_fide_per_subject(&self) -> usize {
        (self.videos_per_subject * 2 + 1) / 3
    }
}

struct Job {
    subject: String,
    video: usize,
    class: MaterialClass,
    params: SynthParams,
    seed: u64,
    rel: PathBuf,
}

/// Writes every clip as a directory of 8-bit PNG frames under `out` plus
/// `out/manifest.tsv`, and returns the manifest.
pub fn gen_dataset(spec: &DatasetSpec, out: &Path) -> Result<DatasetManifest> {
    if spec.num_subjects < 3 {
        return Err(Error::invalid(
            "a synthetic dataset needs at least 3 subjects",
        ));
    }
    if spec.videos_per_subject < 2 {
        return Err(Error::invalid("each subject needs at least 2 videos"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jobs = Vec::new();
    let bona = spec.bona_fide_per_subject();
    for s in 0..spec.num_subjects {
        let subject = format!("s{s:02}");
        let shift: f64 = rng.gen_range(-0.1..0.1);
        let warmth: f64 = rng.gen_range(-0.05..0.05);
        let mut params = spec.params.clone();
        let [r, g, b] = params.base_tone;
        params.base_tone = [
            (r * (1.0 + shift + warmth)).clamp(0.05, 0.95),
            (g * (1.0 + shift)).clamp(0.05, 0.95),
            (b * (1.0 + shift - warmth)).clamp(0.05, 0.95),
        ];
        for v in 0..spec.videos_per_subject {
            let class = if v < bona {
                MaterialClass::skin_like()
            } else {
                MaterialClass::mask_like()
            };
            jobs.push(Job {
                subject: subject.clone(),
                video: v,
                class,
                params: params.clone(),
                seed: rng.gen(),
                rel: PathBuf::from(&subject).join(format!("v{v:02}")),
            });
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    run_jobs(&jobs, |job| write_clip(job, out))?;
    let entries = jobs
        .iter()
        .map(|j| ManifestEntry {
            subject_id: j.subject.clone(),
            session: (j.video % 3 + 1).to_string(),
            label: j.class.label(),
            path: j.rel.clone(),
        })
        .collect();
    let manifest = DatasetManifest::new(entries, out);
    manifest.save(&out.join("manifest.tsv"))?;
    Ok(manifest)
}

fn write_clip(job: &Job, out: &Path) -> Result<()> {
    let dir = out.join(&job.rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (seq, _) = gen_sequence(&job.class, &job.params, job.seed)?;
    for (t, frame) in seq.frames().iter().enumerate() {
        write_png8(&dir.join(format!("frame_{t:03}.png")), frame)?;
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn run_jobs(jobs: &[Job], f: impl Fn(&Job) -> Result<()> + Sync + Send) -> Result<()> {
    use rayon::prelude::*;
    jobs.par_iter().try_for_each(f)
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(jobs: &[Job], f: impl Fn(&Job) -> Result<()>) -> Result<()> {
    jobs.iter().try_for_each(f)
}
