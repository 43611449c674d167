use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::frame::{ColorSpace, Frame};
use crate::error::{Error, Result};

/// Decodes an 8- or 16-bit PNG into an RGB frame scaled to `[0, 1]`.
/// Grayscale images are replicated across channels, alpha is dropped.
pub fn read_png(path: &Path) -> Result<Frame> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let samples = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format(path, "unexpanded palette image")),
    };
    let raw: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..info.buffer_size()]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect(),
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / 65535.0)
            .collect(),
        other => {
            return Err(Error::format(
                path,
                format!("unsupported bit depth {other:?}"),
            ))
        }
    };
    let mut data = Vec::with_capacity(width * height * 3);
    for px in raw.chunks_exact(samples) {
        match samples {
            1 | 2 => data.extend_from_slice(&[px[0], px[0], px[0]]),
            _ => data.extend_from_slice(&px[..3]),
        }
    }
    Frame::new(width, height, ColorSpace::Rgb, data)
}

/// Writes the frame's three channels as an 8-bit RGB PNG.
pub fn write_png8(path: &Path, frame: &Frame) -> Result<()> {
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize8(v)).collect();
    encode(
        path,
        frame.width(),
        frame.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &bytes,
    )
}

/// Writes a single plane (values clamped to `[0, 1]`) as a 16-bit grayscale PNG.
pub fn write_png16_gray(path: &Path, width: usize, height: usize, plane: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = plane
        .iter()
        .flat_map(|&v| quantize16(v).to_be_bytes())
        .collect();
    encode(
        path,
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &bytes,
    )
}

/// Writes a frame as a 16-bit RGB PNG.
pub fn write_png16(path: &Path, frame: &Frame) -> Result<()> {
    let bytes: Vec<u8> = frame
        .data()
        .iter()
        .flat_map(|&v| quantize16(v).to_be_bytes())
        .collect();
    encode(
        path,
        frame.width(),
        frame.height(),
        png::ColorType::Rgb,
        png::BitDepth::Sixteen,
        &bytes,
    )
}

pub fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .finish()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// PNG files in `dir`, sorted lexicographically by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Input {
            path: dir.to_path_buf(),
            message: "frame directory does not exist".to_string(),
        });
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}
