//! Block-DCT quantization standing in for JPEG.
//!
//! Latent values are mapped to a pixel-like range with `v * 32 + 128`, coded
//! in 8x8 blocks with the baseline luminance table scaled by quality, and
//! mapped back. There is no rounding of pixel values and no clipping, so
//! quality 100 (zero step) is exactly lossless.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

pub const JPEG_PIXEL_SCALE: f64 = 32.0;
pub const JPEG_PIXEL_OFFSET: f64 = 128.0;

pub const LUMINANCE_TABLE: [f64; 64] = [
    16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0, //
    12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0, //
    14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0, //
    14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0, //
    18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0, //
    24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0, //
    49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0, //
    72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0,
];

/// Quality to percent scale, as in the reference encoder.
fn quality_scale(q: f64) -> f64 {
    if q < 50.0 {
        5000.0 / q
    } else {
        200.0 - 2.0 * q
    }
}

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        b
    })
}

fn dct_block(block: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let b = basis();
    let mut tmp = [[0.0; 8]; 8];
    for x in 0..8 {
        for v in 0..8 {
            tmp[x][v] = (0..8).map(|y| b[v][y] * block[x][y]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for u in 0..8 {
        for v in 0..8 {
            out[u][v] = (0..8).map(|x| b[u][x] * tmp[x][v]).sum();
        }
    }
    out
}

fn idct_block(coef: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let b = basis();
    let mut tmp = [[0.0; 8]; 8];
    for u in 0..8 {
        for y in 0..8 {
            tmp[u][y] = (0..8).map(|v| b[v][y] * coef[u][v]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for x in 0..8 {
        for y in 0..8 {
            out[x][y] = (0..8).map(|u| b[u][x] * tmp[u][y]).sum();
        }
    }
    out
}

/// Quantizes `g` in 8x8 DCT blocks at quality `q` in `[1, 100]`. Edges are
/// replicated up to a multiple of 8 and cropped afterwards.
pub fn jpeg_proxy(g: &Grid2D, q: f64) -> Result<Grid2D> {
    if !(1.0..=100.0).contains(&q) {
        return Err(Error::Config(format!("jpeg quality {q} outside [1, 100]")));
    }
    let scale = quality_scale(q) / 100.0;
    if scale == 0.0 {
        return Ok(g.clone());
    }
    let steps: Vec<f64> = LUMINANCE_TABLE.iter().map(|t| t * scale).collect();
    let (h, w) = g.dims();
    let (ph, pw) = (h.div_ceil(8) * 8, w.div_ceil(8) * 8);
    let pixel = |r: usize, c: usize| g.get(r.min(h - 1), c.min(w - 1)) * JPEG_PIXEL_SCALE;
    let mut out = Grid2D::zeros(h, w);
    for br in (0..ph).step_by(8) {
        for bc in (0..pw).step_by(8) {
            let mut block = [[0.0; 8]; 8];
            for (x, row) in block.iter_mut().enumerate() {
                for (y, v) in row.iter_mut().enumerate() {
                    // level shift cancels the +128 offset of the pixel mapping
                    *v = pixel(br + x, bc + y);
                }
            }
            let mut coef = dct_block(&block);
            for u in 0..8 {
                for v in 0..8 {
                    let step = steps[u * 8 + v];
                    coef[u][v] = (coef[u][v] / step).round() * step;
                }
            }
            let back = idct_block(&coef);
            for x in 0..8 {
                for y in 0..8 {
                    let (r, c) = (br + x, bc + y);
                    if r < h && c < w {
                        out.set(r, c, back[x][y] / JPEG_PIXEL_SCALE);
                    }
                }
            }
        }
    }
    Ok(out)
}
