//! Per-band local statistics and the shading/reflectance correlation cues.
//!
//! For each band at scale `s` the statistics live on a grid decimated by
//! `2^s` and are smoothed with a Gaussian of width `2^(s+1)` pixels:
//!
//! - AM: local RMS envelope of the band,
//! - TM: local variance of the band,
//! - HM: local standard deviation of the two chroma planes (per scale),
//! - the shading cue: gradient magnitude of the smoothed log-luminance.
//!
//! `c_shd` correlates AM with the shading cue and `c_ref` correlates AM with
//! HM. Reflectance edges tend to move chroma together with luminance while
//! illumination edges leave chroma alone, so a band whose envelope follows
//! HM more closely than the luminance gradient is treated as reflectance.

use super::pyramid::Pyramid;
use crate::error::{Error, Result};

/// Standard deviation below which a field counts as constant.
const FLAT_STD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandStat {
    pub scale: usize,
    pub orientation: usize,
    /// AM: local RMS envelope.
    pub amplitude: Vec<f64>,
    /// TM: local variance.
    pub texture: Vec<f64>,
    pub c_shd: f64,
    pub c_ref: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandStatistics {
    pub grids: Vec<Grid>,
    /// HM per scale.
    pub hue: Vec<Vec<f64>>,
    /// Smoothed log-luminance gradient magnitude per scale.
    pub luminance: Vec<Vec<f64>>,
    pub bands: Vec<BandStat>,
}

/// How correlations turn into the shading share of each band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    /// `w = 1 / (1 + exp(-k (c_shd - c_ref)))`.
    Soft { sharpness: f64 },
    /// The `k -> inf` limit: all-or-nothing, ties split evenly.
    Hard,
}

impl Default for Gate {
    fn default() -> Self {
        Gate::Soft { sharpness: 5.0 }
    }
}

impl Gate {
    pub fn weight(self, c_shd: f64, c_ref: f64) -> f64 {
        let d = c_shd - c_ref;
        match self {
            Gate::Soft { sharpness } => 1.0 / (1.0 + (-sharpness * d).exp()),
            Gate::Hard if d > 0.0 => 1.0,
            Gate::Hard if d < 0.0 => 0.0,
            Gate::Hard => 0.5,
        }
    }
}

impl BandStatistics {
    /// Shading share of every band, each in `[0, 1]`.
    pub fn weights(&self, gate: Gate) -> Vec<f64> {
        self.bands
            .iter()
            .map(|b| gate.weight(b.c_shd, b.c_ref))
            .collect()
    }
}

pub fn compute_band_statistics(p: &Pyramid, chroma: [&[f64]; 2]) -> Result<BandStatistics> {
    band_statistics(p, chroma, true)
}

/// Without `texture` every `BandStat::texture` is left empty; the band
/// weights do not depend on it.
pub(crate) fn band_statistics(
    p: &Pyramid,
    chroma: [&[f64]; 2],
    texture: bool,
) -> Result<BandStatistics> {
    let (w, h) = (p.width(), p.height());
    for c in chroma {
        if c.len() != w * h {
            return Err(Error::Dimension {
                expected: w * h,
                actual: c.len(),
            });
        }
    }
    let mut grids = Vec::with_capacity(p.scales());
    let mut hue = Vec::with_capacity(p.scales());
    let mut luminance = Vec::with_capacity(p.scales());
    for s in 0..p.scales() {
        let stride = 1 << s;
        let sigma = (2 << s) as f64;
        let mut hm: Option<Vec<f64>> = None;
        let mut grid = Grid {
            width: 0,
            height: 0,
            stride,
        };
        for c in chroma {
            let (var, gw, gh) = local_variance(c, w, h, sigma, stride);
            grid.width = gw;
            grid.height = gh;
            match hm.as_mut() {
                Some(acc) => acc.iter_mut().zip(&var).for_each(|(a, v)| *a += v),
                None => hm = Some(var),
            }
        }
        let hm: Vec<f64> = hm.unwrap_or_default().into_iter().map(f64::sqrt).collect();
        let (smooth, gw, gh) = blur_decimated(p.source(), w, h, sigma, stride);
        luminance.push(gradient_magnitude(&smooth, gw, gh));
        hue.push(hm);
        grids.push(grid);
    }

    let mut bands = Vec::with_capacity(p.bands().len());
    for band in p.bands() {
        let s = band.scale;
        let stride = grids[s].stride;
        let sigma = (2 << s) as f64;
        let cropped = p.crop(&band.data);
        let squared: Vec<f64> = cropped.iter().map(|v| v * v).collect();
        let (energy, ..) = blur_decimated(&squared, w, h, sigma, stride);
        let amplitude: Vec<f64> = energy.iter().map(|e| e.max(0.0).sqrt()).collect();
        let texture: Vec<f64> = if texture {
            let (mean, ..) = blur_decimated(&cropped, w, h, sigma, stride);
            energy
                .iter()
                .zip(&mean)
                .map(|(e, m)| (e - m * m).max(0.0))
                .collect()
        } else {
            Vec::new()
        };
        let c_shd = pearson(&amplitude, &luminance[s]);
        let c_ref = pearson(&amplitude, &hue[s]);
        bands.push(BandStat {
            scale: s,
            orientation: band.orientation,
            amplitude,
            texture,
            c_shd,
            c_ref,
        });
    }
    Ok(BandStatistics {
        grids,
        hue,
        luminance,
        bands,
    })
}

/// Pearson correlation; zero when either input is (numerically) constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let (sa, sb) = ((saa / n as f64).sqrt(), (sbb / n as f64).sqrt());
    if sa < FLAT_STD || sb < FLAT_STD {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Shifting by a sample value first keeps flat planes at exactly zero.
fn local_variance(
    plane: &[f64],
    w: usize,
    h: usize,
    sigma: f64,
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let anchor = plane.first().copied().unwrap_or(0.0);
    let centered: Vec<f64> = plane.iter().map(|v| v - anchor).collect();
    let squared: Vec<f64> = centered.iter().map(|v| v * v).collect();
    let (m2, gw, gh) = blur_decimated(&squared, w, h, sigma, stride);
    let (m1, ..) = blur_decimated(&centered, w, h, sigma, stride);
    let var = m2
        .iter()
        .zip(&m1)
        .map(|(a, b)| (a - b * b).max(0.0))
        .collect();
    (var, gw, gh)
}

fn gradient_magnitude(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: usize, y: usize| plane[y * w + x];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = if w < 2 {
                0.0
            } else if x == 0 {
                at(1, y) - at(0, y)
            } else if x == w - 1 {
                at(x, y) - at(x - 1, y)
            } else {
                0.5 * (at(x + 1, y) - at(x - 1, y))
            };
            let gy = if h < 2 {
                0.0
            } else if y == 0 {
                at(x, 1) - at(x, 0)
            } else if y == h - 1 {
                at(x, y) - at(x, y - 1)
            } else {
                0.5 * (at(x, y + 1) - at(x, y - 1))
            };
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur sampled every `stride` pixels, mirror boundary.
pub(crate) fn blur_decimated(
    plane: &[f64],
    w: usize,
    h: usize,
    sigma: f64,
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let gw = w.div_ceil(stride);
    let gh = h.div_ceil(stride);
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let m = i.rem_euclid(period);
        (if m < n { m } else { period - 1 - m }) as usize
    };
    // Vertical pass first, on the kept rows only; whole-row updates vectorize.
    let padded_w = w + 2 * radius;
    let mut cols = vec![0.0; gh * padded_w];
    for gy in 0..gh {
        let cy = (gy * stride) as isize;
        let dst = &mut cols[gy * padded_w + radius..gy * padded_w + radius + w];
        for (d, k) in (-(radius as isize)..=radius as isize).zip(&kernel) {
            let y = reflect(cy + d, h);
            for (o, v) in dst.iter_mut().zip(&plane[y * w..(y + 1) * w]) {
                *o += k * v;
            }
        }
    }
    let mut out = vec![0.0; gh * gw];
    for gy in 0..gh {
        let row = &mut cols[gy * padded_w..(gy + 1) * padded_w];
        for i in 0..radius {
            row[i] = row[radius + reflect(i as isize - radius as isize, w)];
            row[radius + w + i] = row[radius + reflect((w + i) as isize, w)];
        }
        let dst = &mut out[gy * gw..(gy + 1) * gw];
        for (t, k) in kernel.iter().enumerate() {
            if stride == 1 {
                for (o, v) in dst.iter_mut().zip(&row[t..]) {
                    *o += k * v;
                }
            } else {
                for (o, v) in dst.iter_mut().zip(row[t..].iter().step_by(stride)) {
                    *o += k * v;
                }
            }
        }
    }
    (out, gw, gh)
}
