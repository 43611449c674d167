use super::frame::{Frame, FrameSequence};
use crate::error::{Error, Result};

/// Bilinear resize with corner-aligned sampling: output pixel `i` samples
/// source coordinate `i * (in - 1) / (out - 1)`, so the four corners map
/// onto the four source corners exactly.
pub fn resize_bilinear(frame: &Frame, width: usize, height: usize) -> Result<Frame> {
    if width < 2 || height < 2 {
        return Err(Error::invalid("resize target must be at least 2x2"));
    }
    if frame.width() == width && frame.height() == height {
        return Ok(frame.clone());
    }
    let (sw, sh) = (frame.width(), frame.height());
    let src = frame.data();
    let xs = sample_positions(sw, width);
    let ys = sample_positions(sh, height);
    let mut data = Vec::with_capacity(width * height * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let at = |x: usize, y: usize| src[(y * sw + x) * 3 + c];
                let (a, b) = (at(x0, y0), at(x1, y0));
                let (p, q) = (at(x0, y1), at(x1, y1));
                let top = a + (b - a) * fx;
                let bottom = p + (q - p) * fx;
                let v = top + (bottom - top) * fy;
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Frame::new(width, height, frame.color_space(), data)
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = if src > 1 {
        (src - 1) as f64 / (dst - 1) as f64
    } else {
        0.0
    };
    (0..dst)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Resizes every frame to `size`×`size`.
pub fn normalize_frames(seq: &FrameSequence, size: usize) -> Result<FrameSequence> {
    if size < 2 {
        return Err(Error::invalid("normalization size must be at least 2"));
    }
    if seq.is_empty() {
        return Err(Error::invalid("cannot normalize an empty sequence"));
    }
    let frames = seq
        .frames()
        .iter()
        .map(|f| resize_bilinear(f, size, size))
        .collect::<Result<Vec<_>>>()?;
    seq.with_frames(frames)
}
