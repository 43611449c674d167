use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    Hsv,
    YCbCr,
}

impl ColorSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Hsv => "HSV",
            ColorSpace::YCbCr => "YCbCr",
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColorSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(ColorSpace::Rgb),
            "hsv" => Ok(ColorSpace::Hsv),
            "ycbcr" => Ok(ColorSpace::YCbCr),
            other => Err(Error::invalid(format!("unsupported color space `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    BonaFide,
    Attack,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::BonaFide => "bona_fide",
            Label::Attack => "attack",
        }
    }

    /// Class index used by the CNN and SVM: attack = 0, bona fide = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Attack => 0,
            Label::BonaFide => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 1 {
            Label::BonaFide
        } else {
            Label::Attack
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bona_fide" => Ok(Label::BonaFide),
            "attack" => Ok(Label::Attack),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}

/// A three-channel image with values in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    color_space: ColorSpace,
    data: Vec<f64>,
}

impl Frame {
    /// Builds a frame, clamping every value into `[0, 1]`.
    pub fn new(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Dimension {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        for v in data.iter_mut() {
            if !v.is_finite() {
                return Err(Error::invalid("frame contains non-finite values"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Frame {
            width,
            height,
            color_space,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Frame::new(width, height, color_space, data)
    }

    pub fn constant(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        value: [f64; 3],
    ) -> Result<Self> {
        Frame::from_fn(width, height, color_space, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        color_space: ColorSpace,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Frame {
            width,
            height,
            color_space,
            data,
        }
    }
}

/// An ordered run of frames from one video clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    pub subject_id: String,
    pub label: Label,
    pub source: String,
}

impl FrameSequence {
    pub fn new(
        frames: Vec<Frame>,
        subject_id: impl Into<String>,
        label: Label,
        source: impl Into<String>,
    ) -> Result<Self> {
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                if f.width != first.width || f.height != first.height {
                    return Err(Error::invalid("frames in a sequence must share dimensions"));
                }
                if f.color_space != first.color_space {
                    return Err(Error::invalid(
                        "frames in a sequence must share a color space",
                    ));
                }
            }
        }
        Ok(FrameSequence {
            frames,
            subject_id: subject_id.into(),
            label,
            source: source.into(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn color_space(&self) -> Option<ColorSpace> {
        self.frames.first().map(Frame::color_space)
    }

    /// Same metadata, new frames.
    pub fn with_frames(&self, frames: Vec<Frame>) -> Result<Self> {
        FrameSequence::new(
            frames,
            self.subject_id.clone(),
            self.label,
            self.source.clone(),
        )
    }
}
