//! Undecimated, frequency-domain steerable pyramid.
//!
//! Every band is computed at full (padded) resolution by multiplying the
//! image spectrum with a real, even mask. Masks are built so that the sum of
//! their squares is exactly one at every frequency, which makes the
//! synthesis step (apply each mask a second time and sum) an exact inverse
//! of the analysis step.
//!
//! Radial masks use the usual log-radial raised-cosine split, one octave per
//! scale. Angular masks are `|cos(theta - pi k / K)|^(K-1)`, normalized with
//! the identity `sum_k cos^(2n)(theta - pi k / K) = K * C(2n, n) / 4^n`
//! (valid for `n < K`). The absolute value keeps every mask even in
//! frequency, so all bands of a real image are real.
//!
//! Planes are mirror-padded before transforming so that the periodic
//! extension has no seam inside the image.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;

use super::fft2::Fft2;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub scale: usize,
    pub orientation: usize,
    /// Padded-grid coefficients, row-major.
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) padded_width: usize,
    pub(crate) padded_height: usize,
    pub(crate) pad_x: usize,
    pub(crate) pad_y: usize,
    pub(crate) scales: usize,
    pub(crate) orientations: usize,
    pub(crate) bands: Vec<Band>,
    pub(crate) highpass: Vec<f64>,
    pub(crate) lowpass: Vec<f64>,
    /// The decomposed plane itself, kept for scale-matched statistics.
    pub(crate) source: Vec<f64>,
    /// Spectrum of the padded input; emptied once any coefficient plane is
    /// borrowed mutably, since it then no longer describes the bands.
    pub(crate) spectrum: Vec<Complex64>,
}

/// Per-band multipliers applied before synthesis.
#[derive(Clone, Debug, PartialEq)]
pub struct BandWeights {
    pub highpass: f64,
    pub lowpass: f64,
    pub bands: Vec<f64>,
}

impl BandWeights {
    pub fn uniform(count: usize, value: f64) -> Self {
        BandWeights {
            highpass: value,
            lowpass: value,
            bands: vec![value; count],
        }
    }
}

impl Pyramid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn padded_dims(&self) -> (usize, usize) {
        (self.padded_width, self.padded_height)
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    /// Oriented bands ordered by scale (finest first), then orientation.
    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn bands_mut(&mut self) -> &mut [Band] {
        self.spectrum = Vec::new();
        &mut self.bands
    }

    pub fn band(&self, scale: usize, orientation: usize) -> &Band {
        &self.bands[scale * self.orientations + orientation]
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    pub fn highpass_mut(&mut self) -> &mut Vec<f64> {
        self.spectrum = Vec::new();
        &mut self.highpass
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn lowpass_mut(&mut self) -> &mut Vec<f64> {
        self.spectrum = Vec::new();
        &mut self.lowpass
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    /// Copies the unpadded region of a padded-grid plane.
    pub fn crop(&self, padded: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            let row = (y + self.pad_y) * self.padded_width + self.pad_x;
            out.extend_from_slice(&padded[row..row + self.width]);
        }
        out
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.padded_width * self.padded_height;
        if self.bands.len() != self.scales * self.orientations {
            return Err(Error::InvalidState(format!(
                "pyramid has {} bands, expected {}",
                self.bands.len(),
                self.scales * self.orientations
            )));
        }
        let bad = self
            .bands
            .iter()
            .map(|b| b.data.len())
            .chain([self.highpass.len(), self.lowpass.len()])
            .find(|&len| len != n);
        match bad {
            Some(len) => Err(Error::InvalidState(format!(
                "pyramid plane has {len} coefficients, expected {n}"
            ))),
            None => Ok(()),
        }
    }
}

/// Decomposes a row-major plane into `scales`×`orientations` oriented bands
/// plus highpass and lowpass residuals.
pub fn build_pyramid(
    plane: &[f64],
    width: usize,
    height: usize,
    scales: usize,
    orientations: usize,
) -> Result<Pyramid> {
    if scales == 0 || orientations == 0 {
        return Err(Error::invalid(
            "pyramid needs at least one scale and one orientation",
        ));
    }
    if width == 0 || height == 0 || plane.len() != width * height {
        return Err(Error::Dimension {
            expected: width * height,
            actual: plane.len(),
        });
    }
    if plane.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("pyramid input contains non-finite values"));
    }
    let bank = filter_bank(width, height, scales, orientations);
    let (pw, ph) = (bank.padded_width, bank.padded_height);
    let mut spectrum: Vec<Complex64> =
        mirror_pad(plane, width, height, bank.pad_x, bank.pad_y, pw, ph)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
    bank.fft.forward(&mut spectrum);

    // Masks are real and even, so each masked spectrum is Hermitian and two
    // bands can share one inverse transform as real and imaginary parts.
    let masks: Vec<&[f64]> = std::iter::once(bank.highpass.as_slice())
        .chain(std::iter::once(bank.lowpass.as_slice()))
        .chain(bank.bands.iter().map(Vec::as_slice))
        .collect();
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(masks.len());
    let mut buf = vec![Complex64::default(); pw * ph];
    for pair in masks.chunks(2) {
        let (ma, mb) = (pair[0], pair.get(1).copied());
        for (i, z) in buf.iter_mut().enumerate() {
            let s = spectrum[i];
            *z = match mb {
                Some(mb) => s * ma[i] + Complex64::new(0.0, 1.0) * s * mb[i],
                None => s * ma[i],
            };
        }
        bank.fft.inverse(&mut buf);
        planes.push(buf.iter().map(|z| z.re).collect());
        if mb.is_some() {
            planes.push(buf.iter().map(|z| z.im).collect());
        }
    }
    let mut planes = planes.into_iter();
    let highpass = planes.next().unwrap_or_default();
    let lowpass = planes.next().unwrap_or_default();
    let bands = planes
        .enumerate()
        .map(|(i, data)| Band {
            scale: i / orientations,
            orientation: i % orientations,
            data,
        })
        .collect();
    Ok(Pyramid {
        width,
        height,
        padded_width: pw,
        padded_height: ph,
        pad_x: bank.pad_x,
        pad_y: bank.pad_y,
        scales,
        orientations,
        bands,
        highpass,
        lowpass,
        source: plane.to_vec(),
        spectrum,
    })
}

/// Inverse transform: reconstructs the original plane from all bands.
pub fn collapse_pyramid(p: &Pyramid) -> Result<Vec<f64>> {
    collapse_weighted(p, &BandWeights::uniform(p.bands.len(), 1.0))
}

/// Synthesis with every band (and residual) scaled by its weight.
pub fn collapse_weighted(p: &Pyramid, w: &BandWeights) -> Result<Vec<f64>> {
    Ok(collapse_two(p, w, w)?.0)
}

/// Same result as [`collapse_two`] up to rounding. Untouched band
/// coefficients have spectrum `M * X`, so their synthesis is `M^2 * X` and
/// both outputs need a single inverse transform.
pub fn split_two(p: &Pyramid, a: &BandWeights, b: &BandWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.spectrum.is_empty() {
        return collapse_two(p, a, b);
    }
    p.check_shapes()?;
    if a.bands.len() != p.bands.len() || b.bands.len() != p.bands.len() {
        return Err(Error::InvalidState(
            "band weight count does not match pyramid".into(),
        ));
    }
    let bank = filter_bank(p.width, p.height, p.scales, p.orientations);
    let mut gain_a: Vec<f64> = bank.highpass.iter().map(|m| a.highpass * m * m).collect();
    let mut gain_b: Vec<f64> = bank.highpass.iter().map(|m| b.highpass * m * m).collect();
    let masks = std::iter::once((bank.lowpass.as_slice(), a.lowpass, b.lowpass)).chain(
        bank.bands
            .iter()
            .zip(a.bands.iter().zip(&b.bands))
            .map(|(m, (&wa, &wb))| (m.as_slice(), wa, wb)),
    );
    for (mask, wa, wb) in masks {
        for ((ga, gb), m) in gain_a.iter_mut().zip(gain_b.iter_mut()).zip(mask) {
            let m2 = m * m;
            *ga += wa * m2;
            *gb += wb * m2;
        }
    }
    // Both gains are real and even, so both outputs are real and share one
    // transform as real and imaginary parts.
    let mut buf: Vec<Complex64> = p
        .spectrum
        .iter()
        .zip(gain_a.iter().zip(&gain_b))
        .map(|(&x, (&ga, &gb))| x * Complex64::new(ga, gb))
        .collect();
    bank.fft.inverse(&mut buf);
    let re: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let im: Vec<f64> = buf.iter().map(|z| z.im).collect();
    Ok((p.crop(&re), p.crop(&im)))
}

/// Two weighted syntheses sharing one pass of forward transforms.
pub fn collapse_two(p: &Pyramid, a: &BandWeights, b: &BandWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check_shapes()?;
    if a.bands.len() != p.bands.len() || b.bands.len() != p.bands.len() {
        return Err(Error::InvalidState(
            "band weight count does not match pyramid".into(),
        ));
    }
    let bank = filter_bank(p.width, p.height, p.scales, p.orientations);
    if (bank.padded_width, bank.padded_height) != (p.padded_width, p.padded_height) {
        return Err(Error::InvalidState(
            "pyramid padding does not match its filter bank".into(),
        ));
    }
    let n = p.padded_width * p.padded_height;
    let planes: Vec<(&[f64], &[f64], f64, f64)> = [
        (
            p.highpass.as_slice(),
            bank.highpass.as_slice(),
            a.highpass,
            b.highpass,
        ),
        (
            p.lowpass.as_slice(),
            bank.lowpass.as_slice(),
            a.lowpass,
            b.lowpass,
        ),
    ]
    .into_iter()
    .chain(
        p.bands
            .iter()
            .zip(&bank.bands)
            .enumerate()
            .map(|(i, (band, mask))| {
                (
                    band.data.as_slice(),
                    mask.as_slice(),
                    a.bands[i],
                    b.bands[i],
                )
            }),
    )
    .collect();

    let mut acc_a = vec![Complex64::default(); n];
    let mut acc_b = vec![Complex64::default(); n];
    let mut buf = vec![Complex64::default(); n];
    for pair in planes.chunks(2) {
        let (x, mx, xa, xb) = pair[0];
        let second = pair.get(1).copied();
        for (i, z) in buf.iter_mut().enumerate() {
            let im = second.map_or(0.0, |(y, ..)| y[i]);
            *z = Complex64::new(x[i], im);
        }
        bank.fft.forward(&mut buf);
        for i in 0..n {
            let z = buf[i];
            let zn = buf[bank.fft.negated(i)].conj();
            // Spectra of the real and imaginary inputs.
            let sx = (z + zn) * 0.5;
            acc_a[i] += sx * (mx[i] * xa);
            acc_b[i] += sx * (mx[i] * xb);
            if let Some((_, my, ya, yb)) = second {
                let sy = (z - zn) * Complex64::new(0.0, -0.5);
                acc_a[i] += sy * (my[i] * ya);
                acc_b[i] += sy * (my[i] * yb);
            }
        }
    }
    for (za, zb) in acc_a.iter_mut().zip(&acc_b) {
        *za += Complex64::new(0.0, 1.0) * zb;
    }
    bank.fft.inverse(&mut acc_a);
    let re: Vec<f64> = acc_a.iter().map(|z| z.re).collect();
    let im: Vec<f64> = acc_a.iter().map(|z| z.im).collect();
    Ok((p.crop(&re), p.crop(&im)))
}

pub(crate) struct FilterBank {
    padded_width: usize,
    padded_height: usize,
    pad_x: usize,
    pad_y: usize,
    fft: Fft2,
    highpass: Vec<f64>,
    lowpass: Vec<f64>,
    bands: Vec<Vec<f64>>,
}

type BankKey = (usize, usize, usize, usize);

/// Shared, read-only filter banks keyed by geometry.
pub(crate) fn filter_bank(
    width: usize,
    height: usize,
    scales: usize,
    orientations: usize,
) -> Arc<FilterBank> {
    static CACHE: OnceLock<Mutex<HashMap<BankKey, Arc<FilterBank>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (width, height, scales, orientations);
    if let Some(bank) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Arc::clone(bank);
    }
    let bank = Arc::new(FilterBank::new(width, height, scales, orientations));
    cache
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .entry(key)
        .or_insert(bank)
        .clone()
}

impl FilterBank {
    fn new(width: usize, height: usize, scales: usize, orientations: usize) -> Self {
        let padded_width = padded_len(width);
        let padded_height = padded_len(height);
        let pad_x = (padded_width - width) / 2;
        let pad_y = (padded_height - height) / 2;
        let n = padded_width * padded_height;

        let norm = angular_norm(orientations);
        let mut highpass = vec![0.0; n];
        let mut lowpass = vec![0.0; n];
        let mut bands = vec![vec![0.0; n]; scales * orientations];
        for y in 0..padded_height {
            let fy = signed_freq(y, padded_height);
            for x in 0..padded_width {
                let fx = signed_freq(x, padded_width);
                let i = y * padded_width + x;
                let r = (fx * fx + fy * fy).sqrt();
                let lr = if r > 0.0 { r.log2() } else { f64::NEG_INFINITY };
                let theta = fy.atan2(fx);
                highpass[i] = raised_hi(lr, 0.0);
                let mut lo = raised_lo(lr, 0.0);
                for s in 0..scales {
                    let edge = -1.0 - s as f64;
                    let radial = lo * raised_hi(lr, edge);
                    lo *= raised_lo(lr, edge);
                    for k in 0..orientations {
                        let phase = theta - PI * k as f64 / orientations as f64;
                        let ang = phase.cos().abs().powi(orientations as i32 - 1) / norm;
                        bands[s * orientations + k][i] = radial * ang;
                    }
                }
                lowpass[i] = lo;
            }
        }
        // With an even length the Nyquist line is its own negation but the
        // signed frequency there is always -1, which breaks the angular
        // symmetry. Re-symmetrize in a way that keeps the squares summing to 1.
        let fft = Fft2::new(padded_width, padded_height);
        for mask in bands.iter_mut().chain([&mut highpass, &mut lowpass]) {
            for i in 0..n {
                let j = fft.negated(i);
                if j > i {
                    let v = (0.5 * (mask[i] * mask[i] + mask[j] * mask[j])).sqrt();
                    mask[i] = v;
                    mask[j] = v;
                }
            }
        }
        FilterBank {
            padded_width,
            padded_height,
            pad_x,
            pad_y,
            fft,
            highpass,
            lowpass,
            bands,
        }
    }
}

/// Frequency in units of the Nyquist rate, in `[-1, 1)`.
fn signed_freq(k: usize, n: usize) -> f64 {
    let k = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * k / n as f64
}

/// One at or below `log2 r = edge - 1`, zero at or above `edge`.
fn raised_lo(lr: f64, edge: f64) -> f64 {
    let u = (lr - (edge - 1.0)).clamp(0.0, 1.0);
    (FRAC_PI_2 * u).cos()
}

fn raised_hi(lr: f64, edge: f64) -> f64 {
    let u = (lr - (edge - 1.0)).clamp(0.0, 1.0);
    (FRAC_PI_2 * u).sin()
}

fn angular_norm(k: usize) -> f64 {
    let n = k - 1;
    let mut binom = 1.0;
    for i in 0..n {
        binom *= (2 * n - i) as f64 / (i + 1) as f64;
    }
    (k as f64 * binom / 4f64.powi(n as i32)).sqrt()
}

/// Smallest 2^a 3^b 5^c length leaving at least a fifth of the side (and
/// 8 pixels) of mirror margin on each side.
fn padded_len(n: usize) -> usize {
    let margin = (n / 5).max(8);
    let mut m = n + 2 * margin;
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

fn mirror_pad(
    plane: &[f64],
    w: usize,
    h: usize,
    px: usize,
    py: usize,
    pw: usize,
    ph: usize,
) -> Vec<f64> {
    let reflect = |i: isize, n: usize| -> usize {
        let period = 2 * n as isize;
        let m = i.rem_euclid(period);
        if m < n as isize {
            m as usize
        } else {
            (period - 1 - m) as usize
        }
    };
    let mut out = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let sy = reflect(y as isize - py as isize, h);
        for x in 0..pw {
            let sx = reflect(x as isize - px as isize, w);
            out.push(plane[sy * w + sx]);
        }
    }
    out
}
