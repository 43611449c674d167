//! Plain-Rust halves of the browser operations. The exports in the crate
//! root only convert types and errors, so everything here runs natively.

use iipad_core::config::RunConfig;
use iipad_core::eval::{auc, eer, roc_points, ScoreSet};
use iipad_core::ingest::{convert_color, ColorSpace, Frame, FrameSequence, Label};
use iipad_core::intrinsic::{decompose, pearson, DecomposeConfig};
use iipad_core::pipeline::sequence_histograms;
use iipad_core::synth::{gen_sequence, MaterialClass, SynthParams};
use iipad_core::tophist::{parse_planes, Plane};
use iipad_core::{Error, Result};

/// Clip geometry for the histogram demo; the side must be about twice the
/// frame count, and full size is too slow for a single browser thread.
pub const DEMO_FRAMES: usize = 32;
pub const DEMO_SIDE: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Rgba {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Rgba {
    fn from_rgb(width: usize, height: usize, rgb: &[f64]) -> Self {
        let pixels = rgb
            .chunks_exact(3)
            .flat_map(|c| [to_byte(c[0]), to_byte(c[1]), to_byte(c[2]), 255])
            .collect();
        Rgba {
            width,
            height,
            pixels,
        }
    }

    /// Gray image scaled so the largest value is white.
    fn from_gray(width: usize, height: usize, values: &[f64], gamma: f64) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        let pixels = values
            .iter()
            .flat_map(|&v| {
                let g = to_byte((v * scale).powf(gamma));
                [g, g, g, 255]
            })
            .collect();
        Rgba {
            width,
            height,
            pixels,
        }
    }
}

fn class(mask: bool) -> MaterialClass {
    if mask {
        MaterialClass::mask_like()
    } else {
        MaterialClass::skin_like()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceDecomposition {
    pub input: Rgba,
    pub albedo: Rgba,
    pub reflectance: Rgba,
    pub shading: Rgba,
    /// Pearson correlation of recovered and true albedo luminance.
    pub correlation: f64,
    pub v_dc: f64,
}

/// Renders one synthetic RGB face and splits it into shading and reflectance.
pub fn decompose_face(seed: u64, mask: bool, size: usize) -> Result<FaceDecomposition> {
    if !(16..=256).contains(&size) {
        return Err(Error::InvalidArgument(format!(
            "frame size {size} outside 16..=256"
        )));
    }
    let params = SynthParams {
        size,
        frames: 1,
        ..SynthParams::default()
    };
    let (seq, truth) = gen_sequence(&class(mask), &params, seed)?;
    let frame = &seq.frames()[0];
    let d = decompose(frame, &DecomposeConfig::default())?;
    Ok(FaceDecomposition {
        input: Rgba::from_rgb(size, size, frame.data()),
        albedo: Rgba::from_rgb(size, size, &truth.albedo),
        reflectance: Rgba::from_rgb(size, size, d.reflectance().data()),
        shading: Rgba::from_gray(size, size, &d.shading, 1.0),
        correlation: pearson(&d.reflectance_luminance(), &truth.albedo_luminance()),
        v_dc: d.v_dc,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopView {
    pub plane: Plane,
    pub rows: usize,
    pub cols: usize,
    /// Row-major probability histograms, three 256-bin channels per row.
    pub values: Vec<f64>,
    pub heatmap: Rgba,
}

/// HSV histograms of one plane of a short synthetic clip, taken from the
/// reflectance or from the raw frames.
pub fn top_histogram(seed: u64, mask: bool, plane: &str, intrinsic: bool) -> Result<TopView> {
    let plane = match parse_planes(plane)?.as_slice() {
        [p] => *p,
        _ => {
            return Err(Error::InvalidArgument(
                "choose exactly one of XY, XT, YT".into(),
            ))
        }
    };
    let params = SynthParams {
        size: DEMO_SIDE,
        frames: DEMO_FRAMES,
        ..SynthParams::default()
    };
    let (seq, _) = gen_sequence(&class(mask), &params, seed)?;
    let hsv = seq
        .frames()
        .iter()
        .map(|f| convert_color(f, ColorSpace::Hsv))
        .collect::<Result<Vec<Frame>>>()?;
    let seq = FrameSequence::new(hsv, seq.subject_id.clone(), seq.label, seq.source.clone())?;
    let cfg = RunConfig {
        intrinsic,
        sequence_length: DEMO_FRAMES,
        frame_size: DEMO_SIDE,
        ..RunConfig::default()
    };
    let matrices = sequence_histograms(&seq, &cfg)?;
    let m = matrices
        .into_iter()
        .find(|m| m.plane == plane)
        .ok_or_else(|| Error::InvalidState(format!("no {plane} histogram")))?;
    let (rows, cols) = (m.rows(), m.cols());
    let values = m.values().to_vec();
    // A square root keeps sparse bins visible next to the peaks.
    let heatmap = Rgba::from_gray(cols, rows, &values, 0.5);
    Ok(TopView {
        plane,
        rows,
        cols,
        values,
        heatmap,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocSummary {
    pub bona_fide: usize,
    pub attack: usize,
    pub eer: f64,
    pub threshold: f64,
    pub auc: f64,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
}

fn parse_label(token: &str) -> Option<Label> {
    match token {
        "1" | "bona_fide" | "bonafide" | "live" => Some(Label::BonaFide),
        "0" | "attack" | "mask" => Some(Label::Attack),
        _ => None,
    }
}

/// Parses `score label` lines (whitespace or comma separated; `#` starts a
/// comment) and summarizes the resulting ROC.
pub fn roc_from_text(text: &str) -> Result<RocSummary> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let bad = || {
            Error::InvalidArgument(format!(
                "line {}: expected `score label`, got `{line}`",
                i + 1
            ))
        };
        let [score, label] = fields.as_slice() else {
            return Err(bad());
        };
        let score: f64 = score.parse().map_err(|_| bad())?;
        pairs.push((score, parse_label(label).ok_or_else(bad)?));
    }
    let set = ScoreSet::new(pairs)?;
    let (rate, threshold) = eer(&set)?;
    let points = roc_points(&set)?;
    Ok(RocSummary {
        bona_fide: set.bona_fide().len(),
        attack: set.attack().len(),
        eer: rate,
        threshold,
        auc: auc(&set)?,
        far: points.iter().map(|p| p.far).collect(),
        frr: points.iter().map(|p| p.frr).collect(),
    })
}
