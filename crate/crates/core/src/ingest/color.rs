//! RGB to HSV and full-range BT.601 YCbCr, with inverses.

use super::frame::{ColorSpace, Frame};
use crate::error::{Error, Result};

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;

/// HSV with every channel in `[0, 1]`; hue wraps into `[0, 1)`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, v];
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = sector / 6.0;
    if h >= 1.0 {
        h -= 1.0;
    }
    [h, s, v]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(1.0) * 6.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Full-range BT.601; chroma offset by 0.5 so achromatic pixels sit at 0.5.
pub fn rgb_to_ycbcr([r, g, b]: [f64; 3]) -> [f64; 3] {
    let y = KR * r + KG * g + KB * b;
    let cb = 0.5 + (b - y) / (2.0 * (1.0 - KB));
    let cr = 0.5 + (r - y) / (2.0 * (1.0 - KR));
    [y, cb, cr]
}

pub fn ycbcr_to_rgb([y, cb, cr]: [f64; 3]) -> [f64; 3] {
    let r = y + 2.0 * (1.0 - KR) * (cr - 0.5);
    let b = y + 2.0 * (1.0 - KB) * (cb - 0.5);
    let g = (y - KR * r - KB * b) / KG;
    [r, g, b]
}

/// Converts an RGB frame into `target`, clamping the result into `[0, 1]`.
pub fn convert_color(frame: &Frame, target: ColorSpace) -> Result<Frame> {
    if frame.color_space() != ColorSpace::Rgb {
        return Err(Error::invalid(format!(
            "color conversion expects an RGB frame, got {}",
            frame.color_space()
        )));
    }
    let map: fn([f64; 3]) -> [f64; 3] = match target {
        ColorSpace::Rgb => return Ok(frame.clone()),
        ColorSpace::Hsv => rgb_to_hsv,
        ColorSpace::YCbCr => rgb_to_ycbcr,
    };
    let mut data = Vec::with_capacity(frame.data().len());
    for px in frame.data().chunks_exact(3) {
        let out = map([px[0], px[1], px[2]]);
        data.extend(out.iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Ok(Frame::from_parts_unchecked(
        frame.width(),
        frame.height(),
        target,
        data,
    ))
}

/// Parses a tag and converts; unknown tags are an invalid-argument error.
pub fn convert_color_tag(frame: &Frame, target: &str) -> Result<Frame> {
    convert_color(frame, target.parse()?)
}
