//! Plane-feature concatenation and a linear SVM.
//!
//! The SVM minimizes `0.5 |w|^2 + C sum_i max(0, 1 - y_i (w x_i + b))` over
//! z-scored features, with the bias treated as the weight of an extra
//! constant-one input (so it is regularized too). Training runs dual
//! coordinate descent over the samples in index order until the duality gap
//! drops below the tolerance. Bona fide is the positive class.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::tophist::Plane;

/// Output of one plane network for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFeature {
    pub plane: Plane,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    /// Planes present, in `XY, XT, YT` order.
    pub planes: Vec<Plane>,
    pub values: Vec<f64>,
}

/// Concatenates the selected planes in the fixed order `XY, XT, YT`,
/// whatever the order of `features`.
pub fn concat_features(features: &[PlaneFeature], selection: &[Plane]) -> Result<FeatureVector> {
    let mut planes = selection.to_vec();
    planes.sort();
    planes.dedup();
    if planes.is_empty() {
        return Err(Error::invalid("no planes selected"));
    }
    let mut values = Vec::new();
    let mut width = None;
    for &plane in &planes {
        let f = features
            .iter()
            .find(|f| f.plane == plane)
            .ok_or_else(|| Error::invalid(format!("no feature for selected plane {plane}")))?;
        if *width.get_or_insert(f.values.len()) != f.values.len() {
            return Err(Error::Dimension {
                expected: width.unwrap_or(0),
                actual: f.values.len(),
            });
        }
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite {plane} feature")));
        }
        values.extend_from_slice(&f.values);
    }
    Ok(FeatureVector { planes, values })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    pub standardize: bool,
    /// Stop once primal minus dual objective is at most this.
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            c: 1.0,
            standardize: true,
            tolerance: 1e-6,
            max_passes: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub mean: Vec<f64>,
    /// Strictly positive.
    pub scale: Vec<f64>,
    pub passes: usize,
    pub duality_gap: f64,
}

const MODEL_MAGIC: &[u8; 4] = b"IISV";
const MODEL_VERSION: u16 = 1;

impl SvmModel {
    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::Dimension {
                expected: self.dims(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    /// `w . standardize(x) + b`; higher means more likely bona fide.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardize(x)?;
        Ok(dot(&self.weights, &z) + self.bias)
    }

    /// Primal objective on raw training features.
    pub fn objective(&self, features: &[Vec<f64>], labels: &[Label]) -> Result<f64> {
        let mut hinge = 0.0;
        for (x, &l) in features.iter().zip(labels) {
            hinge += (1.0 - sign(l) * self.score(x)?).max(0.0);
        }
        Ok(0.5 * (dot(&self.weights, &self.weights) + self.bias * self.bias) + self.c * hinge)
    }

    /// `IISV`, version `u16`, zero `u16`, dims `u32`, then little-endian
    /// `f64`: C, mean, scale, weights, bias.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * (3 * self.dims() + 2));
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.dims() as u32).to_le_bytes());
        out.extend_from_slice(&self.c.to_le_bytes());
        for v in self.mean.iter().chain(&self.scale).chain(&self.weights) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::format(origin, "not an SVM model (bad magic)"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported SVM model version {version}"),
            ));
        }
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + 8 * (3 * d + 2) {
            return Err(Error::format(
                origin,
                "SVM model length does not match its header",
            ));
        }
        let f: Vec<f64> = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let model = SvmModel {
            c: f[0],
            mean: f[1..1 + d].to_vec(),
            scale: f[1 + d..1 + 2 * d].to_vec(),
            weights: f[1 + 2 * d..1 + 3 * d].to_vec(),
            bias: f[1 + 3 * d],
            passes: 0,
            duality_gap: 0.0,
        };
        if model.scale.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::format(origin, "SVM scale entries must be positive"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn sign(l: Label) -> f64 {
    match l {
        Label::BonaFide => 1.0,
        Label::Attack => -1.0,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-dimension mean and population standard deviation; zero-variance
/// dimensions get scale 1.
pub fn fit_standardization(features: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = features.first().map_or(0, Vec::len);
    let n = features.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for x in features {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for x in features {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 * (1.0 + sd) && sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

pub fn train_svm(features: &[Vec<f64>], labels: &[Label], opts: &SvmOptions) -> Result<SvmModel> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::invalid("need one label per feature vector"));
    }
    if !labels.contains(&Label::BonaFide) || !labels.contains(&Label::Attack) {
        return Err(Error::invalid("SVM training needs both classes"));
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return Err(Error::invalid(format!(
            "SVM C must be positive, got {}",
            opts.c
        )));
    }
    let d = features[0].len();
    for x in features {
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
    }
    let (mean, scale) = if opts.standardize {
        fit_standardization(features)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };
    // Standardized samples with the constant bias input appended.
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|x| {
            let mut z: Vec<f64> = x
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect();
            z.push(1.0);
            z
        })
        .collect();
    let ys: Vec<f64> = labels.iter().map(|&l| sign(l)).collect();
    let qii: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let c = opts.c;
    let mut alpha = vec![0.0; xs.len()];
    let mut w = vec![0.0; d + 1];
    let mut passes = 0;
    let mut gap = f64::INFINITY;
    while passes < opts.max_passes {
        passes += 1;
        for i in 0..xs.len() {
            let g = ys[i] * dot(&w, &xs[i]) - 1.0;
            let projected = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            if projected != 0.0 && qii[i] > 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * ys[i];
                w.iter_mut()
                    .zip(&xs[i])
                    .for_each(|(wj, xj)| *wj += delta * xj);
            }
        }
        let ww = dot(&w, &w);
        let hinge: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (1.0 - y * dot(&w, x)).max(0.0))
            .sum();
        let primal = 0.5 * ww + c * hinge;
        let dual = alpha.iter().sum::<f64>() - 0.5 * ww;
        gap = primal - dual;
        if gap <= opts.tolerance {
            break;
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    Ok(SvmModel {
        weights: w,
        bias,
        c,
        mean,
        scale,
        passes,
        duality_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardization_handles_constant_dimensions() {
        let xs = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let (mean, scale) = fit_standardization(&xs);
        assert_eq!(mean, vec![2.0, 5.0]);
        assert_eq!(scale, vec![1.0, 1.0]);
    }

    #[test]
    fn model_bytes_round_trip() {
        let m = SvmModel {
            weights: vec![0.5, -1.0],
            bias: 0.25,
            c: 1.0,
            mean: vec![0.0, 1.0],
            scale: vec![1.0, 2.0],
            passes: 0,
            duality_gap: 0.0,
        };
        let p = Path::new("m.iisv");
        assert_eq!(SvmModel::from_bytes(&m.to_bytes(), p).unwrap(), m);
        assert!(SvmModel::from_bytes(b"IISX", p).is_err());
    }
}
