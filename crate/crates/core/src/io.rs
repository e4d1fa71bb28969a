//! `MXLT v1` latent tensor files.
//!
//! Layout, little-endian:
//!
//! ```text
//! 0..4   magic "MXLT"
//! 4      u8  version = 1
//! 5..7   u16 height
//! 7..9   u16 width
//! 9..11  u16 channels
//! 11..16 zero padding
//! 16..   channels x height x width f32, channel-major, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::LatentTensor;

pub const MXLT_MAGIC: &[u8; 4] = b"MXLT";
pub const MXLT_VERSION: u8 = 1;
pub const MXLT_HEADER_LEN: usize = 16;

pub fn encode_mxlt(latent: &LatentTensor) -> Result<Vec<u8>> {
    let (h, w, c) = latent.shape();
    let dim = |v: usize, name: &str| {
        u16::try_from(v).map_err(|_| Error::Format(format!("{name} {v} does not fit in u16")))
    };
    let (h16, w16, c16) = (dim(h, "height")?, dim(w, "width")?, dim(c, "channels")?);

    let mut out = Vec::with_capacity(MXLT_HEADER_LEN + 4 * latent.len());
    out.extend_from_slice(MXLT_MAGIC);
    out.push(MXLT_VERSION);
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    out.extend_from_slice(&c16.to_le_bytes());
    out.resize(MXLT_HEADER_LEN, 0);
    for ch in latent.channels() {
        for &v in ch.values() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::Format(format!("value {v} is not representable as a finite f32")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_mxlt(bytes: &[u8]) -> Result<LatentTensor> {
    if bytes.len() < MXLT_HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MXLT_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if bytes[4] != MXLT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    let read_u16 = |at: usize| u16::from_le_bytes([bytes[at], bytes[at + 1]]) as usize;
    let (h, w, c) = (read_u16(5), read_u16(7), read_u16(9));
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Format(format!("zero dimension in {h}x{w}x{c}")));
    }
    if h != w {
        return Err(Error::UnsupportedShape(format!("latent must be square, got {h}x{w}")));
    }
    let expected = MXLT_HEADER_LEN + 4 * h * w * c;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes for {h}x{w}x{c}, got {}", bytes.len())));
    }
    let values: Vec<f64> = bytes[MXLT_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite sample".into()));
    }
    LatentTensor::from_values(h, c, values)
}

pub fn read_mxlt(path: impl AsRef<Path>) -> Result<LatentTensor> {
    decode_mxlt(&fs::read(path)?)
}

pub fn write_mxlt(path: impl AsRef<Path>, latent: &LatentTensor) -> Result<()> {
    fs::write(path, encode_mxlt(latent)?)?;
    Ok(())
}
