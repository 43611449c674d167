//! Intensity histograms over three orthogonal planes of a clip.
//!
//! For a clip of `n` frames of `w × h` pixels:
//!
//! - XY: one row per frame,
//! - XT: one row per even image row `y = 2s`, covering that row across time,
//! - YT: one row per even image column `x = 2s`, across time.
//!
//! Each row concatenates three 256-bin channel histograms (768 columns).
//! Values are binned with `floor(v * 255 + 0.5)`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::FrameSequence;

pub const BINS: usize = 256;
pub const CHANNELS: usize = 3;
pub const ROW_LEN: usize = BINS * CHANNELS;

const CACHE_MAGIC: &[u8; 4] = b"IIHM";
const CACHE_VERSION: u16 = 1;
const CACHE_HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Plane {
    XY,
    XT,
    YT,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::XY, Plane::XT, Plane::YT];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::XY => "XY",
            Plane::XT => "XT",
            Plane::YT => "YT",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "XY" => Ok(Plane::XY),
            "XT" => Ok(Plane::XT),
            "YT" => Ok(Plane::YT),
            other => Err(Error::invalid(format!(
                "unknown plane `{other}` (expected XY, XT or YT)"
            ))),
        }
    }
}

/// Parses a comma- or dash-separated plane list such as `XT,YT` or `XY-XT-YT`.
pub fn parse_planes(s: &str) -> Result<Vec<Plane>> {
    let mut planes: Vec<Plane> = s
        .split([',', '-', '+'])
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    planes.sort();
    planes.dedup();
    if planes.is_empty() {
        return Err(Error::invalid("plane selection is empty"));
    }
    Ok(planes)
}

pub fn format_planes(planes: &[Plane]) -> String {
    planes
        .iter()
        .map(|p| p.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Normalization {
    Counts,
    /// Every channel segment sums to one.
    #[default]
    Probability,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Counts => "counts",
            Normalization::Probability => "probability",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Normalization::Counts => 0,
            Normalization::Probability => 1,
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "counts" => Ok(Normalization::Counts),
            "probability" => Ok(Normalization::Probability),
            other => Err(Error::invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramMatrix {
    pub plane: Plane,
    pub normalization: Normalization,
    rows: usize,
    values: Vec<f64>,
}

impl HistogramMatrix {
    pub fn new(
        plane: Plane,
        normalization: Normalization,
        rows: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != rows * ROW_LEN {
            return Err(Error::Dimension {
                expected: rows * ROW_LEN,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "histogram entries must be finite and non-negative",
            ));
        }
        Ok(HistogramMatrix {
            plane,
            normalization,
            rows,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        ROW_LEN
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * ROW_LEN..(r + 1) * ROW_LEN]
    }

    /// Row-major, `rows × 768`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    /// Writes the cache format: a 16-byte header (`IIHM`, version `u16`,
    /// plane tag `u8`, normalization tag `u8`, rows `u32`, cols `u32`)
    /// followed by little-endian `f32` values, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CACHE_HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.push(self.plane.tag());
        out.push(self.normalization.tag());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(ROW_LEN as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(origin, m);
        if bytes.len() < CACHE_HEADER_LEN || &bytes[..4] != CACHE_MAGIC {
            return Err(bad("missing IIHM header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CACHE_VERSION {
            return Err(bad(&format!(
                "unsupported histogram cache version {version}"
            )));
        }
        let plane = Plane::from_tag(bytes[6]).ok_or_else(|| bad("unknown plane tag"))?;
        let normalization = match bytes[7] {
            0 => Normalization::Counts,
            1 => Normalization::Probability,
            _ => return Err(bad("unknown normalization tag")),
        };
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if cols != ROW_LEN {
            return Err(bad(&format!("expected {ROW_LEN} columns, found {cols}")));
        }
        let body = &bytes[CACHE_HEADER_LEN..];
        if body.len() != rows * cols * 4 {
            return Err(bad("payload length does not match the header"));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        HistogramMatrix::new(plane, normalization, rows, values).map_err(|e| bad(&e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Bin of a value in `[0, 1]`.
#[inline]
pub fn bin_index(v: f64) -> usize {
    ((v * 255.0 + 0.5).floor() as usize).min(BINS - 1)
}

/// 256-bin histogram of a slice of values in `[0, 1]`.
pub fn histogram_256(values: &[f64], normalization: Normalization) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; BINS];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!(
                "histogram input {v} outside [0, 1]"
            )));
        }
        counts[bin_index(v)] += 1.0;
    }
    if normalization == Normalization::Probability && !values.is_empty() {
        let n = values.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
    }
    Ok(counts)
}

/// Number of slices taken every other row or column of a side of length `n`.
pub fn slice_count(n: usize) -> usize {
    n.div_ceil(2)
}

/// All three matrices in one pass over the clip, in `XY, XT, YT` order.
pub fn build_top(
    seq: &FrameSequence,
    normalization: Normalization,
) -> Result<[HistogramMatrix; 3]> {
    let (n, w, h) = check_geometry(seq)?;
    let (sx, sy) = (slice_count(w), slice_count(h));
    let mut xy = vec![0.0; n * ROW_LEN];
    let mut xt = vec![0.0; sy * ROW_LEN];
    let mut yt = vec![0.0; sx * ROW_LEN];
    for (t, frame) in seq.frames().iter().enumerate() {
        let data = frame.data();
        for y in 0..h {
            for x in 0..w {
                let px = &data[(y * w + x) * 3..(y * w + x) * 3 + 3];
                for (c, &v) in px.iter().enumerate() {
                    let col = c * BINS + bin_index(v);
                    xy[t * ROW_LEN + col] += 1.0;
                    if y % 2 == 0 {
                        xt[(y / 2) * ROW_LEN + col] += 1.0;
                    }
                    if x % 2 == 0 {
                        yt[(x / 2) * ROW_LEN + col] += 1.0;
                    }
                }
            }
        }
    }
    if normalization == Normalization::Probability {
        xy.iter_mut().for_each(|v| *v /= (w * h) as f64);
        xt.iter_mut().for_each(|v| *v /= (w * n) as f64);
        yt.iter_mut().for_each(|v| *v /= (h * n) as f64);
    }
    Ok([
        HistogramMatrix::new(Plane::XY, normalization, n, xy)?,
        HistogramMatrix::new(Plane::XT, normalization, sy, xt)?,
        HistogramMatrix::new(Plane::YT, normalization, sx, yt)?,
    ])
}

pub fn build_plane(
    seq: &FrameSequence,
    plane: Plane,
    normalization: Normalization,
) -> Result<HistogramMatrix> {
    let [xy, xt, yt] = build_top(seq, normalization)?;
    Ok(match plane {
        Plane::XY => xy,
        Plane::XT => xt,
        Plane::YT => yt,
    })
}

pub fn build_xy(seq: &FrameSequence, normalization: Normalization) -> Result<HistogramMatrix> {
    build_plane(seq, Plane::XY, normalization)
}

pub fn build_xt(seq: &FrameSequence, normalization: Normalization) -> Result<HistogramMatrix> {
    build_plane(seq, Plane::XT, normalization)
}

pub fn build_yt(seq: &FrameSequence, normalization: Normalization) -> Result<HistogramMatrix> {
    build_plane(seq, Plane::YT, normalization)
}

/// All three matrices must share a height, so the clip length has to equal
/// the slice count along both image axes.
fn check_geometry(seq: &FrameSequence) -> Result<(usize, usize, usize)> {
    let first = seq
        .frames()
        .first()
        .ok_or_else(|| Error::invalid("cannot build histograms of an empty sequence"))?;
    let (n, w, h) = (seq.len(), first.width(), first.height());
    if slice_count(w) != n || slice_count(h) != n {
        return Err(Error::invalid(format!(
            "a {n}-frame clip needs frames of side {} or {}, got {w}x{h}",
            2 * n - 1,
            2 * n
        )));
    }
    Ok((n, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_rule() {
        assert_eq!(bin_index(0.0), 0);
        assert_eq!(bin_index(0.5), 128);
        assert_eq!(bin_index(1.0), 255);
        assert_eq!(bin_index(0.5 / 255.0 - 1e-12), 0);
        assert_eq!(bin_index(0.5 / 255.0), 1);
    }

    #[test]
    fn histogram_rejects_out_of_range() {
        assert!(histogram_256(&[0.2, 1.5], Normalization::Counts).is_err());
        assert!(histogram_256(&[f64::NAN], Normalization::Counts).is_err());
    }

    #[test]
    fn plane_lists() {
        assert_eq!(parse_planes("YT,XT").unwrap(), vec![Plane::XT, Plane::YT]);
        assert_eq!(parse_planes("XY-XT-YT").unwrap().len(), 3);
        assert!(parse_planes("").is_err());
        assert!(parse_planes("XZ").is_err());
        assert_eq!(format_planes(&[Plane::XT, Plane::YT]), "XT,YT");
    }

    #[test]
    fn cache_rejects_bad_headers() {
        let m = HistogramMatrix::new(Plane::XT, Normalization::Counts, 2, vec![1.0; 2 * ROW_LEN])
            .unwrap();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 16 + 2 * ROW_LEN * 4);
        let p = Path::new("x.iihm");
        assert_eq!(HistogramMatrix::from_bytes(&bytes, p).unwrap(), m);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            HistogramMatrix::from_bytes(&bad, p),
            Err(Error::Format { .. })
        ));
        assert!(HistogramMatrix::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
    }
}
