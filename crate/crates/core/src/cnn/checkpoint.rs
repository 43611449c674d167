//! Checkpoint format (all integers little-endian):
//!
//! ```text
//! "IINN" | version u16 | plane tag u8 | 0 u8 | input len u32 | bins u32 | layer count u32
//! per layer:
//!   type code u8
//!   conv: kernel u32 | in channels u32 | out channels u32 | pad u32
//!   fc:   outputs u32
//!   weight count u32 | f32 weights | bias count u32 | f32 biases
//! ```

use std::fs;
use std::path::Path;

use super::network::{Layer, LayerKind, Network};
use crate::error::{Error, Result};
use crate::tophist::Plane;

const MAGIC: &[u8; 4] = b"IINN";
const VERSION: u16 = 1;

pub fn checkpoint_bytes(net: &Network<f32>, plane: Plane) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(plane.tag());
    out.push(0);
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut out, net.input_shape().len);
    put(&mut out, net.input_shape().bins);
    put(&mut out, net.layers().len());
    for layer in net.layers() {
        out.push(layer.kind.code());
        match layer.kind {
            LayerKind::Conv {
                kernel,
                in_channels,
                out_channels,
                pad,
            } => {
                for v in [kernel, in_channels, out_channels, pad] {
                    put(&mut out, v);
                }
            }
            LayerKind::FullyConnected { outputs } => put(&mut out, outputs),
            _ => {}
        }
        for values in [&layer.weights, &layer.bias] {
            put(&mut out, values.len());
            for v in values.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.origin, "checkpoint is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn floats(&mut self) -> Result<Vec<f32>> {
        let n = self.u32()?;
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format(self.origin, "bad count"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], origin: &Path) -> Result<(Plane, Network<f32>)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format(
            origin,
            "not a network checkpoint (bad magic)",
        ));
    }
    let mut r = Reader {
        bytes,
        pos: 4,
        origin,
    };
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let plane =
        Plane::from_tag(r.u8()?).ok_or_else(|| Error::format(origin, "unknown plane tag"))?;
    r.u8()?;
    let input_len = r.u32()?;
    let bins = r.u32()?;
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let kind = match r.u8()? {
            1 => LayerKind::Conv {
                kernel: r.u32()?,
                in_channels: r.u32()?,
                out_channels: r.u32()?,
                pad: r.u32()?,
            },
            2 => LayerKind::Relu,
            3 => LayerKind::AvgPool,
            4 => LayerKind::Transpose,
            5 => LayerKind::FullyConnected { outputs: r.u32()? },
            6 => LayerKind::SoftMax,
            code => return Err(Error::format(origin, format!("unknown layer type {code}"))),
        };
        let weights = r.floats()?;
        let bias = r.floats()?;
        layers.push(Layer {
            kind,
            weights,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(origin, "trailing bytes after the last layer"));
    }
    let net = Network::from_layers(layers, input_len, bins)
        .map_err(|e| Error::format(origin, e.to_string()))?;
    Ok((plane, net))
}

pub fn save_checkpoint(path: &Path, net: &Network<f32>, plane: Plane) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint_bytes(net, plane)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Plane, Network<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}
