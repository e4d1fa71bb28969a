//! Payload sampling and the replicate–shuffle–tile layout of the initial noise.
//!
//! The `h x w` plane is cut into an `f_hw x f_hw` grid of blocks and the
//! channel axis into `f_c` groups. Replica `i` occupies block
//! `i = group * f_hw^2 + block_row * f_hw + block_col`. Inside a block the
//! payload is laid out channel, row, column, and position `k` holds
//! `w[perm_i[k]]`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::keys::{MasterSeed, ShuffleKeySet};
use crate::error::{Error, Result};
use crate::grid::{normalize_unit, LatentTensor};

pub const MIN_PAYLOAD_LEN: usize = 16;

/// Replication factors along the spatial axes (`f_hw`) and the channel axis (`f_c`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub f_hw: usize,
    pub f_c: usize,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self { f_hw: 2, f_c: 1 }
    }
}

impl ReplicationConfig {
    pub fn replica_count(&self) -> usize {
        self.f_c * self.f_hw * self.f_hw
    }

    /// Payload dims `(h/f_hw, w/f_hw, c/f_c)` for a latent of the given shape.
    pub fn payload_dims(&self, latent_shape: (usize, usize, usize)) -> Result<PayloadDims> {
        let (h, w, c) = latent_shape;
        if self.f_hw == 0 || self.f_c == 0 {
            return Err(Error::Config("replication factors must be positive".into()));
        }
        if h % self.f_hw != 0 || w % self.f_hw != 0 || c % self.f_c != 0 {
            return Err(Error::Config(format!(
                "f_hw={} must divide {h} and {w}, f_c={} must divide {c}",
                self.f_hw, self.f_c
            )));
        }
        let dims = PayloadDims { height: h / self.f_hw, width: w / self.f_hw, channels: c / self.f_c };
        if dims.len() < MIN_PAYLOAD_LEN {
            return Err(Error::Config(format!("payload of {} elements is below {MIN_PAYLOAD_LEN}", dims.len())));
        }
        Ok(dims)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl PayloadDims {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The payload `w`: zero mean, unit population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct WatermarkVector {
    dims: PayloadDims,
    values: Vec<f64>,
}

impl WatermarkVector {
    pub fn new(dims: PayloadDims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::ShapeMismatch(format!("{} values for payload of {}", values.len(), dims.len())));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> PayloadDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws `L` standard normals from the seed's payload stream and normalizes them.
pub fn sample_watermark(seed: &MasterSeed, dims: PayloadDims) -> Result<WatermarkVector> {
    if dims.len() < MIN_PAYLOAD_LEN {
        return Err(Error::Config(format!("payload of {} elements is below {MIN_PAYLOAD_LEN}", dims.len())));
    }
    let mut rng = ChaCha20Rng::from_seed(seed.payload_subseed());
    let raw: Vec<f64> = (0..dims.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    WatermarkVector::new(dims, normalize_unit(&raw)?)
}

/// Latent positions (channel-major flat indices) of each replica block, in block order.
pub(crate) fn block_positions(
    cfg: &ReplicationConfig,
    latent_shape: (usize, usize, usize),
) -> Result<Vec<Vec<u32>>> {
    let dims = cfg.payload_dims(latent_shape)?;
    let (h, w, _) = latent_shape;
    let mut blocks = Vec::with_capacity(cfg.replica_count());
    for group in 0..cfg.f_c {
        for br in 0..cfg.f_hw {
            for bc in 0..cfg.f_hw {
                let mut pos = Vec::with_capacity(dims.len());
                for ch in 0..dims.channels {
                    let channel = group * dims.channels + ch;
                    for r in 0..dims.height {
                        let row = br * dims.height + r;
                        for col in 0..dims.width {
                            let column = bc * dims.width + col;
                            pos.push(((channel * h + row) * w + column) as u32);
                        }
                    }
                }
                blocks.push(pos);
            }
        }
    }
    Ok(blocks)
}

fn check_keys(keys: &ShuffleKeySet, cfg: &ReplicationConfig, payload_len: usize) -> Result<()> {
    if keys.replica_count() != cfg.replica_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} shuffle keys for {} replicas",
            keys.replica_count(),
            cfg.replica_count()
        )));
    }
    if keys.payload_len() != payload_len {
        return Err(Error::ShapeMismatch(format!(
            "keys permute {} elements, payload has {payload_len}",
            keys.payload_len()
        )));
    }
    Ok(())
}

/// Builds `z_T` by tiling shuffled replicas of `w`.
pub fn assemble_initial_noise(
    w: &WatermarkVector,
    keys: &ShuffleKeySet,
    cfg: &ReplicationConfig,
    latent_shape: (usize, usize, usize),
) -> Result<LatentTensor> {
    let dims = cfg.payload_dims(latent_shape)?;
    if dims != w.dims() {
        return Err(Error::ShapeMismatch(format!("payload {:?} does not fit layout {:?}", w.dims(), dims)));
    }
    check_keys(keys, cfg, dims.len())?;
    let (h, _, c) = latent_shape;
    let mut flat = vec![0.0; h * h * c];
    for (replica, positions) in block_positions(cfg, latent_shape)?.iter().enumerate() {
        let perm = keys.permutation(replica);
        for (k, &pos) in positions.iter().enumerate() {
            flat[pos as usize] = w.values()[perm[k] as usize];
        }
    }
    LatentTensor::from_values(h, c, flat)
}

/// Gather table: `table[replica * L + j]` is the latent position holding payload element `j`.
#[derive(Debug, Clone)]
pub struct ExtractionPlan {
    replicas: usize,
    payload_len: usize,
    latent_shape: (usize, usize, usize),
    table: Vec<u32>,
}

impl ExtractionPlan {
    pub fn new(keys: &ShuffleKeySet, cfg: &ReplicationConfig, latent_shape: (usize, usize, usize)) -> Result<Self> {
        let dims = cfg.payload_dims(latent_shape)?;
        let len = dims.len();
        check_keys(keys, cfg, len)?;
        let blocks = block_positions(cfg, latent_shape)?;
        let mut table = vec![0u32; blocks.len() * len];
        for (replica, positions) in blocks.iter().enumerate() {
            let perm = keys.permutation(replica);
            let row = &mut table[replica * len..(replica + 1) * len];
            for (k, &pos) in positions.iter().enumerate() {
                row[perm[k] as usize] = pos;
            }
        }
        Ok(Self { replicas: blocks.len(), payload_len: len, latent_shape, table })
    }

    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        self.latent_shape
    }

    /// Averaged deshuffled replicas from a channel-major flattened latent.
    pub fn extract_flat(&self, flat: &[f64]) -> Vec<f64> {
        let len = self.payload_len;
        let mut out = vec![0.0; len];
        for replica in 0..self.replicas {
            let row = &self.table[replica * len..(replica + 1) * len];
            for (o, &pos) in out.iter_mut().zip(row) {
                *o += flat[pos as usize];
            }
        }
        let inv = 1.0 / self.replicas as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }

    /// Pearson correlation of `w` with the extraction from `flat`, without
    /// materializing the extracted vector. `None` when the extraction is constant.
    pub fn correlate_flat(&self, flat: &[f32], w: &[f64]) -> Option<f64> {
        let len = self.payload_len;
        let mut x = vec![0.0f64; len];
        for replica in 0..self.replicas {
            let row = &self.table[replica * len..(replica + 1) * len];
            for (o, &pos) in x.iter_mut().zip(row) {
                *o += flat[pos as usize] as f64;
            }
        }
        // eight independent lanes so the reductions vectorize
        const LANES: usize = 8;
        let (mut s, mut ss, mut sw, mut sww, mut swx) = ([0.0f64; LANES], [0.0f64; LANES], [0.0f64; LANES], [0.0f64; LANES], [0.0f64; LANES]);
        let (xc, wc) = (x.chunks_exact(LANES), w[..len].chunks_exact(LANES));
        let (xr, wr) = (xc.remainder(), wc.remainder());
        for (xs, ws) in xc.zip(wc) {
            for k in 0..LANES {
                let (xv, wv) = (xs[k], ws[k]);
                s[k] += xv;
                ss[k] += xv * xv;
                sw[k] += wv;
                sww[k] += wv * wv;
                swx[k] += wv * xv;
            }
        }
        for (k, (&xv, &wv)) in xr.iter().zip(wr).enumerate() {
            s[k] += xv;
            ss[k] += xv * xv;
            sw[k] += wv;
            sww[k] += wv * wv;
            swx[k] += wv * xv;
        }
        let total = |a: [f64; LANES]| a.iter().sum::<f64>();
        let (s, ss, sw, sww, swx) = (total(s), total(ss), total(sw), total(sww), total(swx));
        let n = len as f64;
        let cov = swx - sw * s / n;
        let vx = ss - s * s / n;
        let vw = sww - sw * sw / n;
        if vx <= 1e-300 || vw <= 1e-300 {
            return None;
        }
        Some((cov / (vx.sqrt() * vw.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Candidates scored together by [`ExtractionPlan::correlate_block`].
pub const BLOCK: usize = 8;

/// Interleaves up to [`BLOCK`] flattened latents as `out[pos * BLOCK + b]`;
/// missing slots are zero and score `None`.
pub fn interleave_block(latents: &[&[f32]]) -> Vec<f32> {
    assert!(latents.len() <= BLOCK && !latents.is_empty());
    let n = latents[0].len();
    let mut out = vec![0.0f32; n * BLOCK];
    for (b, flat) in latents.iter().enumerate() {
        assert_eq!(flat.len(), n);
        for (pos, &v) in flat.iter().enumerate() {
            out[pos * BLOCK + b] = v;
        }
    }
    out
}

impl ExtractionPlan {
    /// [`correlate_flat`](Self::correlate_flat) for a block made by [`interleave_block`].
    pub fn correlate_block(&self, block: &[f32], w: &[f64]) -> [Option<f64>; BLOCK] {
        let len = self.payload_len;
        let mut x = vec![[0.0f32; BLOCK]; len];
        for replica in 0..self.replicas {
            let row = &self.table[replica * len..(replica + 1) * len];
            for (o, &pos) in x.iter_mut().zip(row) {
                let src = &block[pos as usize * BLOCK..pos as usize * BLOCK + BLOCK];
                for b in 0..BLOCK {
                    o[b] += src[b];
                }
            }
        }
        let (mut s, mut ss, mut swx) = ([0.0f64; BLOCK], [0.0f64; BLOCK], [0.0f64; BLOCK]);
        let (mut sw, mut sww) = (0.0f64, 0.0f64);
        for (xs, &wv) in x.iter().zip(&w[..len]) {
            sw += wv;
            sww += wv * wv;
            for b in 0..BLOCK {
                let xv = xs[b] as f64;
                s[b] += xv;
                ss[b] += xv * xv;
                swx[b] += wv * xv;
            }
        }
        let n = len as f64;
        let vw = sww - sw * sw / n;
        std::array::from_fn(|b| {
            let cov = swx[b] - sw * s[b] / n;
            let vx = ss[b] - s[b] * s[b] / n;
            (vx > 1e-300 && vw > 1e-300).then(|| (cov / (vx.sqrt() * vw.sqrt())).clamp(-1.0, 1.0))
        })
    }
}

/// Slices `z'_T` per the tiling, undoes each replica's shuffle, and averages.
pub fn extract_watermark(z: &LatentTensor, keys: &ShuffleKeySet, cfg: &ReplicationConfig) -> Result<WatermarkVector> {
    let plan = ExtractionPlan::new(keys, cfg, z.shape())?;
    let dims = cfg.payload_dims(z.shape())?;
    WatermarkVector::new(dims, plan.extract_flat(&z.to_values()))
}
