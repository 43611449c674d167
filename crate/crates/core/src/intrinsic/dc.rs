//! Choice of the DC offset shared between log-shading and log-reflectance.
//!
//! The offset `v` turns `(log S, log R)` into `(log S + v, log R - v)`. It is
//! picked by golden-section search over `[-ln 2, ln 2]` to minimize the
//! pooled within-cluster variance of the color reflectance `I / S`, where
//! clusters are the cells of a uniform 4×4 grid over the frame's chroma
//! planes.

use std::f64::consts::LN_2;

use super::chroma_planes;
use crate::error::{Error, Result};
use crate::ingest::Frame;

/// Largest rescaling (in log units) the transfer may apply.
pub const DC_LIMIT: f64 = LN_2;
const CELLS_PER_AXIS: usize = 4;
const BRACKET_TOL: f64 = 1e-4;
/// Objective values closer than this, relative to the reflectance power,
/// count as equal.
const TIE_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DcTransfer {
    pub log_shading: Vec<f64>,
    pub log_reflectance: Vec<f64>,
    pub v_dc: f64,
}

/// Chroma cell index (0..16) of every pixel.
pub fn cluster_labels(frame: &Frame) -> Vec<usize> {
    let [a, b] = chroma_planes(frame);
    let cell = |v: f64| ((v * CELLS_PER_AXIS as f64) as usize).min(CELLS_PER_AXIS - 1);
    a.iter()
        .zip(&b)
        .map(|(&u, &v)| cell(u) * CELLS_PER_AXIS + cell(v))
        .collect()
}

/// Pooled within-cluster variance of `I / exp(log_shading + v)`, averaged
/// over channels.
pub fn dc_objective(log_shading: &[f64], frame: &Frame, labels: &[usize], v: f64) -> f64 {
    let cells = CELLS_PER_AXIS * CELLS_PER_AXIS;
    let mut count = vec![0usize; cells];
    let mut sum = vec![[0.0f64; 3]; cells];
    let mut sum_sq = vec![[0.0f64; 3]; cells];
    for ((px, &ls), &l) in frame.data().chunks_exact(3).zip(log_shading).zip(labels) {
        let inv = (-(ls + v)).exp();
        count[l] += 1;
        for c in 0..3 {
            let r = px[c] * inv;
            sum[l][c] += r;
            sum_sq[l][c] += r * r;
        }
    }
    let mut within = 0.0;
    for l in 0..cells {
        if count[l] == 0 {
            continue;
        }
        let n = count[l] as f64;
        for c in 0..3 {
            within += (sum_sq[l][c] - sum[l][c] * sum[l][c] / n).max(0.0);
        }
    }
    within / (3 * labels.len().max(1)) as f64
}

pub fn optimize_dc(
    log_shading: &[f64],
    log_reflectance: &[f64],
    frame: &Frame,
) -> Result<DcTransfer> {
    let n = frame.width() * frame.height();
    if log_shading.len() != n || log_reflectance.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: log_shading.len().min(log_reflectance.len()),
        });
    }
    let labels = cluster_labels(frame);
    let first = labels.first().copied().unwrap_or(0);
    let v_dc = if labels.iter().all(|&l| l == first) {
        0.0
    } else {
        // A common factor e^-v on every reflectance scales each
        // within-cluster variance by e^-2v, so one pass over the pixels
        // suffices.
        let base = dc_objective(log_shading, frame, &labels, 0.0);
        let f = |v: f64| base * (-2.0 * v).exp();
        let found = golden_section(&f, -DC_LIMIT, DC_LIMIT, BRACKET_TOL);
        // The bracket ends and zero are always candidates; on equal
        // objective the smallest transfer wins.
        let power = frame
            .data()
            .chunks_exact(3)
            .zip(log_shading)
            .map(|(px, ls)| px.iter().map(|v| v * v).sum::<f64>() * (-2.0 * (ls - DC_LIMIT)).exp())
            .sum::<f64>()
            / (3 * n.max(1)) as f64;
        let tie = TIE_RTOL * power + f64::MIN_POSITIVE;
        let mut best: (f64, f64) = (f(0.0), 0.0);
        for v in [found, -DC_LIMIT, DC_LIMIT] {
            let fv = f(v);
            if fv < best.0 - tie || ((fv - best.0).abs() <= tie && v.abs() < best.1.abs()) {
                best = (fv, v);
            }
        }
        best.1
    };
    Ok(DcTransfer {
        log_shading: log_shading.iter().map(|s| s + v_dc).collect(),
        log_reflectance: log_reflectance.iter().map(|r| r - v_dc).collect(),
        v_dc,
    })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
