//! Shading/reflectance decomposition of single frames.
//!
//! The frame is modelled as `I = S * R` with achromatic shading `S`. The
//! split happens on log-luminance, where it is additive: the steerable
//! pyramid separates the plane into oriented bands, each band is shared
//! between shading and reflectance according to its correlation cues, the
//! lowpass residual goes to shading and the highpass residual to
//! reflectance. A scalar DC offset is then moved between the two log planes.
//! Color reflectance is `I / S` per channel, so `S * R = I` holds up to
//! rounding before `R` is clamped into `[0, 1]`.

mod dc;
mod fft2;
mod pyramid;
mod stats;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use dc::{cluster_labels, dc_objective, optimize_dc, DcTransfer, DC_LIMIT};
pub use pyramid::{
    build_pyramid, collapse_pyramid, collapse_two, collapse_weighted, split_two, Band, BandWeights,
    Pyramid,
};
pub use stats::{compute_band_statistics, pearson, BandStat, BandStatistics, Gate, Grid};

use crate::error::{Error, Result};
use crate::ingest::{write_png16, write_png16_gray, ColorSpace, Frame};

/// Floor applied to luminance before taking the logarithm.
pub const LUMINANCE_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeConfig {
    pub scales: usize,
    pub orientations: usize,
    pub gate: Gate,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            scales: 3,
            orientations: 4,
            gate: Gate::default(),
        }
    }
}

/// Shading and clamped color reflectance of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicPair {
    /// Positive, row-major.
    pub shading: Vec<f64>,
    /// Same size and color space as the input frame.
    pub reflectance: Frame,
}

/// Full decomposition result, including values needed for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub width: usize,
    pub height: usize,
    pub color_space: ColorSpace,
    pub shading: Vec<f64>,
    /// `I / S` per channel, before clamping.
    pub reflectance_raw: Vec<f64>,
    pub v_dc: f64,
    /// Shading share of every oriented band.
    pub band_weights: Vec<f64>,
}

impl Decomposition {
    pub fn reflectance(&self) -> Frame {
        let clamped = self
            .reflectance_raw
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Frame::from_parts_unchecked(self.width, self.height, self.color_space, clamped)
    }

    pub fn into_pair(self) -> IntrinsicPair {
        let reflectance = self.reflectance();
        IntrinsicPair {
            shading: self.shading,
            reflectance,
        }
    }

    /// Per-pixel mean of the unclamped reflectance channels.
    pub fn reflectance_luminance(&self) -> Vec<f64> {
        self.reflectance_raw
            .chunks_exact(3)
            .map(|c| (c[0] + c[1] + c[2]) / 3.0)
            .collect()
    }
}

/// Brightness-like plane: channel mean for RGB, V for HSV, Y for YCbCr.
pub fn luminance(frame: &Frame) -> Vec<f64> {
    let d = frame.data().chunks_exact(3);
    match frame.color_space() {
        ColorSpace::Rgb => d.map(|c| (c[0] + c[1] + c[2]) / 3.0).collect(),
        ColorSpace::Hsv => d.map(|c| c[2]).collect(),
        ColorSpace::YCbCr => d.map(|c| c[0]).collect(),
    }
}

/// Two chroma planes in `[0, 1]` that do not change when the frame is
/// uniformly brightened: rg chromaticity for RGB, the hue circle scaled by
/// saturation for HSV, and Cb/Cr for YCbCr.
pub fn chroma_planes(frame: &Frame) -> [Vec<f64>; 2] {
    let n = frame.width() * frame.height();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for c in frame.data().chunks_exact(3) {
        let (u, v) = match frame.color_space() {
            ColorSpace::Rgb => {
                let sum = c[0] + c[1] + c[2];
                if sum > 0.0 {
                    (c[0] / sum, c[1] / sum)
                } else {
                    (1.0 / 3.0, 1.0 / 3.0)
                }
            }
            ColorSpace::Hsv => {
                let angle = std::f64::consts::TAU * c[0];
                (
                    0.5 + 0.5 * c[1] * angle.cos(),
                    0.5 + 0.5 * c[1] * angle.sin(),
                )
            }
            ColorSpace::YCbCr => (c[1], c[2]),
        };
        a.push(u);
        b.push(v);
    }
    [a, b]
}

/// Splits a pyramid of log-luminance into log-shading and log-reflectance.
///
/// Each oriented band goes to shading with weight `w` and to reflectance
/// with weight `1 - w`; the lowpass residual is pure shading and the
/// highpass residual pure reflectance, so the outputs sum to the input.
pub fn reconstruct_shading_reflectance(
    p: &Pyramid,
    stats: &BandStatistics,
    gate: Gate,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if stats.bands.len() != p.bands().len() {
        return Err(Error::InvalidState(
            "statistics do not match the pyramid".into(),
        ));
    }
    reconstruct_with_weights(p, &stats.weights(gate))
}

pub fn reconstruct_with_weights(p: &Pyramid, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let shading = BandWeights {
        highpass: 0.0,
        lowpass: 1.0,
        bands: weights.to_vec(),
    };
    let reflectance = BandWeights {
        highpass: 1.0,
        lowpass: 0.0,
        bands: weights.iter().map(|w| 1.0 - w).collect(),
    };
    split_two(p, &shading, &reflectance)
}

/// Gaussian blur of a full-resolution plane with mirrored borders.
pub fn blur_plane(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    stats::blur_decimated(plane, w, h, sigma, 1).0
}

pub fn decompose(frame: &Frame, cfg: &DecomposeConfig) -> Result<Decomposition> {
    let (w, h) = (frame.width(), frame.height());
    let log_lum: Vec<f64> = luminance(frame)
        .into_iter()
        .map(|v| v.max(LUMINANCE_FLOOR).ln())
        .collect();
    let pyramid = build_pyramid(&log_lum, w, h, cfg.scales, cfg.orientations)?;
    let [ca, cb] = chroma_planes(frame);
    let stats = stats::band_statistics(&pyramid, [&ca, &cb], false)?;
    let band_weights = stats.weights(cfg.gate);
    let (log_s, log_r) = reconstruct_with_weights(&pyramid, &band_weights)?;
    let dc = optimize_dc(&log_s, &log_r, frame)?;
    let shading: Vec<f64> = dc.log_shading.iter().map(|v| v.exp()).collect();
    let mut reflectance_raw = Vec::with_capacity(w * h * 3);
    for (px, s) in frame.data().chunks_exact(3).zip(&shading) {
        reflectance_raw.extend(px.iter().map(|v| v / s));
    }
    Ok(Decomposition {
        width: w,
        height: h,
        color_space: frame.color_space(),
        shading,
        reflectance_raw,
        v_dc: dc.v_dc,
        band_weights,
    })
}

/// Writes `shading.png` (16-bit, divided by its maximum), `reflectance.png`
/// (16-bit RGB, clamped) and `decomposition.txt` with the DC transfer, the
/// shading scale and every band weight.
pub fn write_debug_dump(dir: &Path, d: &Decomposition) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scale = d.shading.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let normalized: Vec<f64> = d.shading.iter().map(|v| v / scale).collect();
    write_png16_gray(&dir.join("shading.png"), d.width, d.height, &normalized)?;
    write_png16(&dir.join("reflectance.png"), &d.reflectance())?;
    let mut text = String::new();
    let _ = writeln!(text, "v_dc={}", d.v_dc);
    let _ = writeln!(text, "shading_scale={scale}");
    let _ = writeln!(text, "color_space={}", d.color_space);
    for (i, w) in d.band_weights.iter().enumerate() {
        let _ = writeln!(text, "band_weight.{i}={w}");
    }
    let path = dir.join("decomposition.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
