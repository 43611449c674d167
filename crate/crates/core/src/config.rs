//! Run configuration in a `key=value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! an error so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::classify::SvmOptions;
use crate::cnn::{FeatureReduce, TrainConfig};
use crate::error::{Error, Result};
use crate::ingest::{ColorSpace, FRAME_SIZE, SEQUENCE_LENGTH};
use crate::intrinsic::{DecomposeConfig, Gate};
use crate::tophist::{format_planes, parse_planes, Normalization, Plane};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub color_space: ColorSpace,
    /// Sorted, non-empty.
    pub planes: Vec<Plane>,
    /// Histogram the reflectance (on) or the input frames (off).
    pub intrinsic: bool,
    pub normalization: Normalization,
    pub sequence_length: usize,
    pub frame_size: usize,
    pub decompose: DecomposeConfig,
    pub train: TrainConfig,
    pub svm: SvmOptions,
    /// Pick C per fold from [`crate::eval::C_GRID`] by dev EER.
    pub tune_c: bool,
    pub feature_reduce: FeatureReduce,
    /// Master seed; per-fold, per-plane network seeds derive from it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            color_space: ColorSpace::Hsv,
            planes: vec![Plane::XT, Plane::YT],
            intrinsic: true,
            normalization: Normalization::Probability,
            sequence_length: SEQUENCE_LENGTH,
            frame_size: FRAME_SIZE,
            decompose: DecomposeConfig::default(),
            train: TrainConfig::default(),
            svm: SvmOptions::default(),
            tune_c: false,
            feature_reduce: FeatureReduce::Mean,
            seed: 0,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.planes.is_empty() {
            return Err(Error::invalid("at least one plane must be selected"));
        }
        if self.sequence_length < 2 || self.frame_size < 2 {
            return Err(Error::invalid(
                "sequence length and frame size must be at least 2",
            ));
        }
        if self.decompose.scales == 0 || self.decompose.orientations == 0 {
            return Err(Error::invalid(
                "pyramid needs at least one scale and one orientation",
            ));
        }
        if self.svm.c.is_nan() || self.svm.c <= 0.0 {
            return Err(Error::invalid("svm.c must be positive"));
        }
        self.train.validate()
    }

    /// Sets one key; the accepted keys are those written by [`Self::to_text`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "color_space" => self.color_space = value.parse()?,
            "planes" => self.planes = parse_planes(value)?,
            "intrinsic" => self.intrinsic = parse_bool(key, value)?,
            "normalization" => self.normalization = value.parse()?,
            "sequence_length" => self.sequence_length = parse_value(key, value)?,
            "frame_size" => self.frame_size = parse_value(key, value)?,
            "pyramid.scales" => self.decompose.scales = parse_value(key, value)?,
            "pyramid.orientations" => self.decompose.orientations = parse_value(key, value)?,
            "gate" => {
                self.decompose.gate = match value {
                    "hard" => Gate::Hard,
                    soft => match soft.strip_prefix("soft:") {
                        Some(k) => Gate::Soft {
                            sharpness: parse_value(key, k)?,
                        },
                        None => {
                            return Err(Error::invalid(format!(
                                "bad gate `{value}` (hard or soft:<k>)"
                            )))
                        }
                    },
                }
            }
            "train.learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "train.momentum" => self.train.momentum = parse_value(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse_value(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, value)?,
            "train.epochs" => self.train.epochs = parse_value(key, value)?,
            "train.patience" => self.train.patience = parse_value(key, value)?,
            "train.stop_when_perfect" => self.train.stop_when_perfect = parse_bool(key, value)?,
            "svm.c" => self.svm.c = parse_value(key, value)?,
            "svm.standardize" => self.svm.standardize = parse_bool(key, value)?,
            "svm.tune_c" => self.tune_c = parse_bool(key, value)?,
            "feature_reduce" => {
                self.feature_reduce = match value {
                    "mean" => FeatureReduce::Mean,
                    "max" => FeatureReduce::Max,
                    _ => {
                        return Err(Error::invalid(format!(
                            "bad feature_reduce `{value}` (mean or max)"
                        )))
                    }
                }
            }
            "seed" => self.seed = parse_value(key, value)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key=value", i + 1))
            })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its resolved value.
    pub fn to_text(&self) -> String {
        let gate = match self.decompose.gate {
            Gate::Hard => "hard".to_string(),
            Gate::Soft { sharpness } => format!("soft:{sharpness}"),
        };
        let reduce = match self.feature_reduce {
            FeatureReduce::Mean => "mean",
            FeatureReduce::Max => "max",
        };
        let t = &self.train;
        let mut out = String::new();
        let _ = writeln!(out, "color_space={}", self.color_space.as_str());
        let _ = writeln!(out, "planes={}", format_planes(&self.planes));
        let _ = writeln!(out, "intrinsic={}", self.intrinsic);
        let _ = writeln!(out, "normalization={}", self.normalization.as_str());
        let _ = writeln!(out, "sequence_length={}", self.sequence_length);
        let _ = writeln!(out, "frame_size={}", self.frame_size);
        let _ = writeln!(out, "pyramid.scales={}", self.decompose.scales);
        let _ = writeln!(out, "pyramid.orientations={}", self.decompose.orientations);
        let _ = writeln!(out, "gate={gate}");
        let _ = writeln!(out, "train.learning_rate={}", t.learning_rate);
        let _ = writeln!(out, "train.momentum={}", t.momentum);
        let _ = writeln!(out, "train.weight_decay={}", t.weight_decay);
        let _ = writeln!(out, "train.batch_size={}", t.batch_size);
        let _ = writeln!(out, "train.epochs={}", t.epochs);
        let _ = writeln!(out, "train.patience={}", t.patience);
        let _ = writeln!(out, "train.stop_when_perfect={}", t.stop_when_perfect);
        let _ = writeln!(out, "svm.c={}", self.svm.c);
        let _ = writeln!(out, "svm.standardize={}", self.svm.standardize);
        let _ = writeln!(out, "svm.tune_c={}", self.tune_c);
        let _ = writeln!(out, "feature_reduce={reduce}");
        let _ = writeln!(out, "seed={}", self.seed);
        out
    }

    /// Cache-key fragment for everything that changes histogram content.
    pub fn histogram_variant(&self) -> String {
        let source = if self.intrinsic {
            let gate = match self.decompose.gate {
                Gate::Hard => "hard".to_string(),
                Gate::Soft { sharpness } => format!("soft{sharpness}"),
            };
            format!(
                "intrinsic-s{}o{}-{gate}",
                self.decompose.scales, self.decompose.orientations
            )
        } else {
            "original".to_string()
        };
        format!(
            "{}-{}-{}x{}-{}",
            self.color_space.as_str(),
            source,
            self.frame_size,
            self.sequence_length,
            self.normalization.as_str()
        )
    }
}
