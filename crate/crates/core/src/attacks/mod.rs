//! Stirmark- and WAVES-style distortions as deterministic grid transforms.
//!
//! Every attack restores the input dimensions. Stochastic attacks draw from
//! their own `seed` parameter, so a spec plus an input fully determines the output.

mod filters;
mod jpeg;
mod parse;

use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{crop_center, gamma, resize, rotate, zoom_about_center, Grid2D, Interp, LatentTensor};

pub use filters::{gaussian_blur, gaussian_kernel, median_filter};
pub use jpeg::{jpeg_proxy, JPEG_PIXEL_OFFSET, JPEG_PIXEL_SCALE, LUMINANCE_TABLE};
pub use parse::{format_pipeline, kind_info, parse_pipeline, parse_preset, KindInfo, ParamInfo, ParamType, KINDS};

/// Presets shipped with the repository, by file stem.
pub const PRESETS: &[(&str, &str)] = &[
    ("stirmark_rst", include_str!("../../../../presets/stirmark_rst.txt")),
    ("waves_single", include_str!("../../../../presets/waves_single.txt")),
];

/// Parses a shipped preset by name, with or without the `.txt` suffix.
pub fn builtin_preset(name: &str) -> Option<Result<Vec<AttackPipeline>>> {
    let stem = name.strip_suffix(".txt").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == stem).map(|(_, text)| parse_preset(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attack {
    /// Rotate, crop the largest axis-aligned content square, resize back.
    RotateCropRescale { theta: f64 },
    /// Rotate with zero-filled corners.
    RotatePad { theta: f64 },
    /// Upscale by `s >= 1`, center crop.
    ScaleCrop { s: f64 },
    /// Downscale by `s <= 1`, zero pad.
    ScalePad { s: f64 },
    /// Delete `nc` columns and `nr` rows at seeded positions, resize back.
    TranslateRowcolRemove { nc: usize, nr: usize, seed: u64 },
    /// Remove `p` percent of the area from the border, resize back.
    CropPercent { p: f64 },
    /// Shear by `sx`, `sy` percent, crop to content, resize back.
    Shear { sx: f64, sy: f64 },
    GaussianNoise { sigma: f64, seed: u64 },
    GaussianBlur { k: usize },
    MedianFilter { k: usize },
    /// Multiply values by `b`.
    Brightness { b: f64 },
    /// Stretch values about the channel mean by `c`.
    Contrast { c: f64 },
    JpegProxy { q: f64 },
    /// Zero a seeded rectangle covering `frac` of the area.
    EraseRegion { frac: f64, seed: u64 },
}

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::RotateCropRescale { .. } => "rotate_crop_rescale",
            Attack::RotatePad { .. } => "rotate_pad",
            Attack::ScaleCrop { .. } => "scale_crop",
            Attack::ScalePad { .. } => "scale_pad",
            Attack::TranslateRowcolRemove { .. } => "translate_rowcol_remove",
            Attack::CropPercent { .. } => "crop_percent",
            Attack::Shear { .. } => "shear",
            Attack::GaussianNoise { .. } => "gaussian_noise",
            Attack::GaussianBlur { .. } => "gaussian_blur",
            Attack::MedianFilter { .. } => "median_filter",
            Attack::Brightness { .. } => "brightness",
            Attack::Contrast { .. } => "contrast",
            Attack::JpegProxy { .. } => "jpeg_proxy",
            Attack::EraseRegion { .. } => "erase_region",
        }
    }

    /// Rotation this attack applies, when it is purely geometric about the center.
    pub fn rotation(&self) -> Option<f64> {
        match *self {
            Attack::RotateCropRescale { theta } | Attack::RotatePad { theta } => Some(theta),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.name())));
        match *self {
            Attack::RotateCropRescale { theta } | Attack::RotatePad { theta } if !theta.is_finite() => {
                bad(format!("theta {theta} is not finite"))
            }
            Attack::ScaleCrop { s } if !(1.0..=4.0).contains(&s) => bad(format!("s {s} outside [1, 4]")),
            Attack::ScalePad { s } if !(s >= 0.1 && s <= 1.0) => bad(format!("s {s} outside [0.1, 1]")),
            Attack::CropPercent { p } if !(0.0..90.0).contains(&p) => bad(format!("p {p} outside [0, 90)")),
            Attack::Shear { sx, sy } if !(sx.abs() < 50.0 && sy.abs() < 50.0) => {
                bad(format!("shear ({sx}, {sy}) outside (-50, 50)"))
            }
            Attack::GaussianNoise { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("sigma {sigma} must be nonnegative"))
            }
            Attack::GaussianBlur { k } | Attack::MedianFilter { k } if !(1..=64).contains(&k) => {
                bad(format!("k {k} outside [1, 64]"))
            }
            Attack::Brightness { b } if !(b > 0.0 && b.is_finite()) => bad(format!("b {b} must be positive")),
            Attack::Contrast { c } if !(c >= 0.0 && c.is_finite()) => bad(format!("c {c} must be nonnegative")),
            Attack::JpegProxy { q } if !(1.0..=100.0).contains(&q) => bad(format!("q {q} outside [1, 100]")),
            Attack::EraseRegion { frac, .. } if !(0.0..1.0).contains(&frac) => {
                bad(format!("frac {frac} outside [0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Applies the attack to one plane. `channel` decorrelates per-channel noise.
    pub fn apply_grid(&self, g: &Grid2D, channel: usize) -> Result<Grid2D> {
        self.validate()?;
        let (h, w) = g.dims();
        let interp = Interp::Bilinear;
        match *self {
            Attack::RotateCropRescale { theta } => {
                let rotated = rotate(g, theta, interp)?;
                let factor = 1.0 / gamma(theta);
                let ch = ((h as f64 * factor).round() as usize).clamp(1, h);
                let cw = ((w as f64 * factor).round() as usize).clamp(1, w);
                resize(&crop_center(&rotated, ch, cw)?, h, w, interp)
            }
            Attack::RotatePad { theta } => rotate(g, theta, interp),
            Attack::ScaleCrop { s } | Attack::ScalePad { s } => zoom_about_center(g, s, interp),
            Attack::TranslateRowcolRemove { nc, nr, seed } => {
                if nc >= w || nr >= h {
                    return Err(Error::Config(format!("cannot remove {nc} columns and {nr} rows from {h}x{w}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut drop_cols = vec![false; w];
                sample(&mut rng, w, nc).into_iter().for_each(|c| drop_cols[c] = true);
                let mut drop_rows = vec![false; h];
                sample(&mut rng, h, nr).into_iter().for_each(|r| drop_rows[r] = true);
                let values: Vec<f64> = (0..h)
                    .filter(|&r| !drop_rows[r])
                    .flat_map(|r| (0..w).filter(|&c| !drop_cols[c]).map(move |c| (r, c)))
                    .map(|(r, c)| g.get(r, c))
                    .collect();
                resize(&Grid2D::new(h - nr, w - nc, values)?, h, w, interp)
            }
            Attack::CropPercent { p } => {
                let keep = (1.0 - p / 100.0).sqrt();
                let ch = ((h as f64 * keep).round() as usize).clamp(1, h);
                let cw = ((w as f64 * keep).round() as usize).clamp(1, w);
                resize(&crop_center(g, ch, cw)?, h, w, interp)
            }
            Attack::Shear { sx, sy } => shear(g, sx / 100.0, sy / 100.0),
            Attack::GaussianNoise { sigma, seed } => {
                if sigma == 0.0 {
                    return Ok(g.clone());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (channel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let values = g
                    .values()
                    .iter()
                    .map(|v| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        v + sigma * n
                    })
                    .collect();
                Grid2D::new(h, w, values)
            }
            Attack::GaussianBlur { k } => Ok(gaussian_blur(g, k)),
            Attack::MedianFilter { k } => Ok(median_filter(g, k)),
            Attack::Brightness { b } => Ok(g.map(|v| v * b)),
            Attack::Contrast { c } => {
                let m = g.values().iter().sum::<f64>() / g.len() as f64;
                Ok(g.map(|v| m + c * (v - m)))
            }
            Attack::JpegProxy { q } => jpeg_proxy(g, q),
            Attack::EraseRegion { frac, seed } => Ok(erase_region(g, frac, seed)),
        }
    }

    pub fn apply(&self, z: &LatentTensor) -> Result<LatentTensor> {
        z.try_map_channels(|i, g| self.apply_grid(g, i))
    }
}

/// Shear `col += sx * row`, `row += sy * col` about the center, then crop to
/// the largest centered square with full content and resize back.
fn shear(g: &Grid2D, sx: f64, sy: f64) -> Result<Grid2D> {
    if sx == 0.0 && sy == 0.0 {
        return Ok(g.clone());
    }
    let (h, w) = g.dims();
    let det = 1.0 - sx * sy;
    if det.abs() < 1e-6 {
        return Err(Error::Config("shear is singular".into()));
    }
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let sheared = Grid2D::from_fn(h, w, |r, c| {
        let (y, x) = (r as f64 - cy, c as f64 - cx);
        // inverse of [[1, sy], [sx, 1]] acting on (y, x)
        let sy_src = (y - sy * x) / det;
        let sx_src = (x - sx * y) / det;
        sample_bilinear(g, sy_src + cy, sx_src + cx)
    });
    let keep = det.abs() / (1.0 + sx.abs().max(sy.abs()));
    let ch = ((h as f64 * keep).floor() as usize).clamp(1, h);
    let cw = ((w as f64 * keep).floor() as usize).clamp(1, w);
    resize(&crop_center(&sheared, ch, cw)?, h, w, Interp::Bilinear)
}

fn sample_bilinear(g: &Grid2D, r: f64, c: f64) -> f64 {
    let (h, w) = g.dims();
    let (r0, c0) = (r.floor(), c.floor());
    let (fr, fc) = (r - r0, c - c0);
    let mut acc = 0.0;
    for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
        for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
            let (rr, cc) = (r0 + dr, c0 + dc);
            if wr * wc > 0.0 && rr >= 0.0 && cc >= 0.0 && (rr as usize) < h && (cc as usize) < w {
                acc += wr * wc * g.get(rr as usize, cc as usize);
            }
        }
    }
    acc
}

fn erase_region(g: &Grid2D, frac: f64, seed: u64) -> Grid2D {
    use rand::Rng;
    let (h, w) = g.dims();
    if frac == 0.0 {
        return g.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = frac * (h * w) as f64;
    let aspect: f64 = rng.random_range(0.5..=2.0);
    let eh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
    let ew = ((area / eh as f64).round() as usize).clamp(1, w);
    let r0 = rng.random_range(0..=h - eh);
    let c0 = rng.random_range(0..=w - ew);
    let mut out = g.clone();
    for r in r0..r0 + eh {
        for c in c0..c0 + ew {
            out.set(r, c, 0.0);
        }
    }
    out
}

/// Ordered, nonempty list of attacks. Serializes as its canonical text form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AttackPipeline {
    attacks: Vec<Attack>,
}

impl AttackPipeline {
    pub fn new(attacks: Vec<Attack>) -> Result<Self> {
        if attacks.is_empty() {
            return Err(Error::Config("attack pipeline is empty".into()));
        }
        attacks.iter().try_for_each(Attack::validate)?;
        Ok(Self { attacks })
    }

    pub fn attacks(&self) -> &[Attack] {
        &self.attacks
    }

    /// Net rotation of the pipeline, if any attack rotates.
    pub fn rotation(&self) -> Option<f64> {
        let angles: Vec<f64> = self.attacks.iter().filter_map(Attack::rotation).collect();
        (!angles.is_empty()).then(|| angles.iter().sum())
    }

    pub fn apply(&self, z: &LatentTensor, domain: AttackDomain) -> Result<LatentTensor> {
        z.try_map_channels(|i, g| self.apply_grid(g, i, domain))
    }

    pub fn apply_grid(&self, g: &Grid2D, channel: usize, domain: AttackDomain) -> Result<Grid2D> {
        match domain {
            AttackDomain::Latent => self.attacks.iter().try_fold(g.clone(), |acc, a| a.apply_grid(&acc, channel)),
            AttackDomain::PixelProxy { scale } => {
                let up = block_upsample(g, scale)?;
                let attacked = self.attacks.iter().try_fold(up, |acc, a| a.apply_grid(&acc, channel))?;
                block_downsample(&attacked, scale)
            }
        }
    }
}

impl std::fmt::Display for AttackPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&format_pipeline(self))
    }
}

impl std::str::FromStr for AttackPipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_pipeline(s)
    }
}

impl TryFrom<String> for AttackPipeline {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_pipeline(&s)
    }
}

impl From<AttackPipeline> for String {
    fn from(p: AttackPipeline) -> String {
        format_pipeline(&p)
    }
}

pub const DEFAULT_PIXEL_SCALE: usize = 8;

/// Where attacks act: the latent grid itself, or a block-replicated stand-in for pixels.
///
/// Text form: `latent`, `pixel_proxy` (scale 8) or `pixel_proxy:<scale>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum AttackDomain {
    #[default]
    Latent,
    PixelProxy { scale: usize },
}

impl std::str::FromStr for AttackDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown attack domain {s:?}"));
        match s.split_once(':') {
            None if s == "latent" => Ok(Self::Latent),
            None if s == "pixel_proxy" || s == "pixel-proxy" => Ok(Self::PixelProxy { scale: DEFAULT_PIXEL_SCALE }),
            Some(("pixel_proxy" | "pixel-proxy", scale)) => match scale.parse::<usize>() {
                Ok(scale) if scale > 0 => Ok(Self::PixelProxy { scale }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for AttackDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Latent => f.write_str("latent"),
            Self::PixelProxy { scale } => write!(f, "pixel_proxy:{scale}"),
        }
    }
}

impl TryFrom<String> for AttackDomain {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AttackDomain> for String {
    fn from(d: AttackDomain) -> String {
        d.to_string()
    }
}

pub fn block_upsample(g: &Grid2D, scale: usize) -> Result<Grid2D> {
    if scale == 0 {
        return Err(Error::Config("pixel proxy scale must be positive".into()));
    }
    let (h, w) = g.dims();
    Ok(Grid2D::from_fn(h * scale, w * scale, |r, c| g.get(r / scale, c / scale)))
}

pub fn block_downsample(g: &Grid2D, scale: usize) -> Result<Grid2D> {
    let (h, w) = g.dims();
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(Error::Config(format!("cannot block-average {h}x{w} by {scale}")));
    }
    let inv = 1.0 / (scale * scale) as f64;
    Ok(Grid2D::from_fn(h / scale, w / scale, |r, c| {
        let mut acc = 0.0;
        for dr in 0..scale {
            for dc in 0..scale {
                acc += g.get(r * scale + dr, c * scale + dc);
            }
        }
        acc * inv
    }))
}
