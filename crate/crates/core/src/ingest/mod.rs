//! Frame loading and normalization for face-video clips.
//!
//! A clip is a directory of pre-cropped PNG frames. Loading takes the first
//! `n` frames in lexicographic file order, so the same directory always
//! yields the same sequence.

mod color;
mod frame;
mod manifest;
mod png_io;
mod resize;

use std::path::Path;

pub use color::{
    convert_color, convert_color_tag, hsv_to_rgb, rgb_to_hsv, rgb_to_ycbcr, ycbcr_to_rgb,
};
pub use frame::{ColorSpace, Frame, FrameSequence, Label};
pub use manifest::{DatasetManifest, ManifestEntry, MANIFEST_HEADER};
pub use png_io::{list_frames, quantize8, read_png, write_png16, write_png16_gray, write_png8};
pub use resize::{normalize_frames, resize_bilinear};

use crate::error::{Error, Result};

/// Default clip length.
pub const SEQUENCE_LENGTH: usize = 75;
/// Default frame side after normalization.
pub const FRAME_SIZE: usize = 150;

/// Loads the first `n` frames of the entry's directory as RGB.
pub fn load_sequence(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    n: usize,
) -> Result<FrameSequence> {
    let dir = manifest.resolve(entry);
    let frames = load_frames(&dir, n)?;
    FrameSequence::new(
        frames,
        entry.subject_id.clone(),
        entry.label,
        dir.to_string_lossy().into_owned(),
    )
}

/// Reads the first `n` PNG frames of `dir`.
pub fn load_frames(dir: &Path, n: usize) -> Result<Vec<Frame>> {
    let files = list_frames(dir)?;
    if files.len() < n {
        return Err(Error::InsufficientData {
            path: dir.to_path_buf(),
            found: files.len(),
            needed: n,
        });
    }
    files[..n].iter().map(|p| read_png(p)).collect()
}

/// Loads one clip and brings it into the canonical input form of the
/// feature pipeline.
pub fn prepare_sequence(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    n: usize,
    size: usize,
    color_space: ColorSpace,
) -> Result<FrameSequence> {
    let seq = load_sequence(manifest, entry, n)?;
    let seq = normalize_frames(&seq, size)?;
    let frames = seq
        .frames()
        .iter()
        .map(|f| convert_color(f, color_space))
        .collect::<Result<Vec<_>>>()?;
    seq.with_frames(frames)
}
