//! Geometric resampling: rotation about the grid center, resizing, centered pad/crop.
//!
//! Cell `(r, c)` covers `[r, r+1) x [c, c+1)`, so the geometric center of an
//! `h x w` grid is `(h/2, w/2)`, which is index `((h-1)/2, (w-1)/2)`.
//! Positive angles rotate counterclockwise as displayed (row axis pointing
//! down): the downward direction turns toward the right.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Grid2D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Nearest,
    #[default]
    Bilinear,
}

impl FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Interp::Nearest),
            "bilinear" => Ok(Interp::Bilinear),
            other => Err(Error::Config(format!("unknown interpolation {other:?}"))),
        }
    }
}

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Sample with zero outside the grid. Bilinear weights of missing neighbours
/// are dropped, which fades the border instead of cutting it.
#[inline]
fn sample(g: &Grid2D, r: f64, c: f64, interp: Interp) -> f64 {
    let (h, w) = (g.height() as isize, g.width() as isize);
    match interp {
        Interp::Nearest => {
            let ri = (r + 0.5).floor() as isize;
            let ci = (c + 0.5).floor() as isize;
            if ri >= 0 && ri < h && ci >= 0 && ci < w {
                g.get(ri as usize, ci as usize)
            } else {
                0.0
            }
        }
        Interp::Bilinear => {
            let r0f = r.floor();
            let c0f = c.floor();
            let fr = r - r0f;
            let fc = c - c0f;
            let r0 = r0f as isize;
            let c0 = c0f as isize;
            if r0 < -1 || r0 >= h || c0 < -1 || c0 >= w {
                return 0.0;
            }
            let at = |ri: isize, ci: isize| -> f64 {
                if ri >= 0 && ri < h && ci >= 0 && ci < w {
                    g.get(ri as usize, ci as usize)
                } else {
                    0.0
                }
            };
            let top = at(r0, c0) * (1.0 - fc) + if fc > 0.0 { at(r0, c0 + 1) * fc } else { 0.0 };
            if fr == 0.0 {
                return top;
            }
            let bottom = at(r0 + 1, c0) * (1.0 - fc) + if fc > 0.0 { at(r0 + 1, c0 + 1) * fc } else { 0.0 };
            top * (1.0 - fr) + bottom * fr
        }
    }
}

/// Rotates about the grid center; cells whose source falls outside are zero.
pub fn rotate(g: &Grid2D, angle_deg: f64, interp: Interp) -> Result<Grid2D> {
    if !angle_deg.is_finite() {
        return Err(Error::InvalidInput(format!("rotation angle {angle_deg}")));
    }
    if angle_deg == 0.0 {
        return Ok(g.clone());
    }
    let (h, w) = g.dims();
    let (s, co) = sin_cos_deg(angle_deg);
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    Ok(Grid2D::from_fn(h, w, |r, c| {
        let dr = r as f64 - cy;
        let dc = c as f64 - cx;
        let sr = dr * co + dc * s + cy;
        let sc = -dr * s + dc * co + cx;
        sample(g, sr, sc, interp)
    }))
}

/// Resamples to `new_h x new_w` using half-pixel-centre alignment.
pub fn resize(g: &Grid2D, new_h: usize, new_w: usize, interp: Interp) -> Result<Grid2D> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::UnsupportedShape(format!("resize target {new_h}x{new_w}")));
    }
    let (h, w) = g.dims();
    if (h, w) == (new_h, new_w) {
        return Ok(g.clone());
    }
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    Ok(Grid2D::from_fn(new_h, new_w, |r, c| {
        let src_r = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let src_c = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        match interp {
            Interp::Nearest => {
                let ri = (src_r + 0.5).floor().min((h - 1) as f64) as usize;
                let ci = (src_c + 0.5).floor().min((w - 1) as f64) as usize;
                g.get(ri, ci)
            }
            Interp::Bilinear => {
                let r0 = src_r.floor() as usize;
                let c0 = src_c.floor() as usize;
                let r1 = (r0 + 1).min(h - 1);
                let c1 = (c0 + 1).min(w - 1);
                let fr = src_r - r0 as f64;
                let fc = src_c - c0 as f64;
                let top = g.get(r0, c0) * (1.0 - fc) + g.get(r0, c1) * fc;
                let bottom = g.get(r1, c0) * (1.0 - fc) + g.get(r1, c1) * fc;
                top * (1.0 - fr) + bottom * fr
            }
        }
    }))
}

/// Surrounds `g` with zeros; when the margin is odd the extra cell goes to the bottom/right.
pub fn pad_center(g: &Grid2D, h: usize, w: usize) -> Result<Grid2D> {
    let (sh, sw) = g.dims();
    if h < sh || w < sw {
        return Err(Error::ShapeMismatch(format!("cannot pad {sh}x{sw} to {h}x{w}")));
    }
    let top = (h - sh) / 2;
    let left = (w - sw) / 2;
    let mut out = Grid2D::zeros(h, w);
    for r in 0..sh {
        let dst = (r + top) * w + left;
        out.values_mut()[dst..dst + sw].copy_from_slice(&g.values()[r * sw..(r + 1) * sw]);
    }
    Ok(out)
}

/// Keeps the centered `h x w` window; inverse of [`pad_center`].
pub fn crop_center(g: &Grid2D, h: usize, w: usize) -> Result<Grid2D> {
    let (sh, sw) = g.dims();
    if h == 0 || w == 0 {
        return Err(Error::UnsupportedShape(format!("crop target {h}x{w}")));
    }
    if h > sh || w > sw {
        return Err(Error::ShapeMismatch(format!("cannot crop {sh}x{sw} to {h}x{w}")));
    }
    let top = (sh - h) / 2;
    let left = (sw - w) / 2;
    Ok(Grid2D::from_fn(h, w, |r, c| g.get(r + top, c + left)))
}

/// Resamples by `factor` about the center and pads or crops back to the original size.
pub fn zoom_about_center(g: &Grid2D, factor: f64, interp: Interp) -> Result<Grid2D> {
    let (h, w) = g.dims();
    let nh = ((h as f64 * factor).round() as usize).max(1);
    let nw = ((w as f64 * factor).round() as usize).max(1);
    let r = resize(g, nh, nw, interp)?;
    match (nh <= h, nw <= w) {
        (true, true) => pad_center(&r, h, w),
        (false, false) => crop_center(&r, h, w),
        (true, false) => pad_center(&crop_center(&r, nh, w)?, h, w),
        (false, true) => crop_center(&pad_center(&r, nh, w)?, h, w),
    }
}

/// `sin(theta) + cos(theta)` with `theta` reduced mod 90: the side of a square
/// rotated by `theta`, measured along the axes, relative to its own side.
pub fn gamma(theta_deg: f64) -> f64 {
    let t = theta_deg.rem_euclid(90.0);
    let (s, c) = sin_cos_deg(t);
    s + c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{center_shift, dft2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(h: usize, w: usize, seed: u64) -> Grid2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid2D::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_and_full_turn_are_identity() {
        let g = random_grid(32, 32, 1);
        assert_eq!(rotate(&g, 0.0, Interp::Bilinear).unwrap(), g);
        assert!(rotate(&g, 360.0, Interp::Nearest).unwrap().max_abs_diff(&g) <= 1e-6);
        assert!(rotate(&g, 360.0, Interp::Bilinear).unwrap().max_abs_diff(&g) <= 1e-6);
    }

    #[test]
    fn quarter_turn_is_a_lattice_permutation() {
        let g = random_grid(64, 64, 2);
        let q = rotate(&g, 90.0, Interp::Nearest).unwrap();
        // index-permutation oracle: down turns to right
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(q.get(r, c), g.get(c, 63 - r));
            }
        }
        let back = rotate(&q, -90.0, Interp::Nearest).unwrap();
        assert_eq!(back, g);
        assert_eq!(rotate(&g, 90.0, Interp::Bilinear).unwrap(), q);
    }

    #[test]
    fn rotation_zero_fills_corners() {
        let g = Grid2D::filled(32, 32, 1.0);
        let r = rotate(&g, 45.0, Interp::Bilinear).unwrap();
        assert_eq!(r.get(0, 0), 0.0);
        assert!((r.get(16, 16) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_angle_rejected() {
        assert!(rotate(&Grid2D::zeros(4, 4), f64::NAN, Interp::Nearest).is_err());
    }

    #[test]
    fn spectrum_corotates_with_the_grid() {
        let n = 64usize;
        for &theta in &[10.0f64, 30.0, 45.0, 60.0] {
            // cosine whose spectral peaks sit at (+-8, 0) from DC
            let k = 8.0;
            let g = Grid2D::from_fn(n, n, |r, _| (2.0 * std::f64::consts::PI * k * r as f64 / n as f64).cos());
            let rotated = rotate(&g, theta, Interp::Bilinear).unwrap();
            let mag = center_shift(&dft2(&rotated).unwrap()).unwrap().magnitudes();
            let mut best = (0usize, 0usize, -1.0);
            for r in 0..n {
                for c in 0..n {
                    if (r, c) != (n / 2, n / 2) && mag.get(r, c) > best.2 {
                        best = (r, c, mag.get(r, c));
                    }
                }
            }
            let (s, co) = sin_cos_deg(theta);
            let expected = [(k * co, k * s), (-k * co, -k * s)];
            let (dr, dc) = (best.0 as f64 - 32.0, best.1 as f64 - 32.0);
            let close = expected.iter().any(|(er, ec)| (dr - er).abs() <= 1.0 && (dc - ec).abs() <= 1.0);
            assert!(close, "theta {theta}: peak at ({dr},{dc}), expected {expected:?}");
        }
    }

    #[test]
    fn resize_properties() {
        let g = random_grid(16, 16, 3);
        assert_eq!(resize(&g, 16, 16, Interp::Bilinear).unwrap(), g);
        let c = Grid2D::filled(64, 64, 3.25);
        for interp in [Interp::Nearest, Interp::Bilinear] {
            let there = resize(&c, 32, 32, interp).unwrap();
            let back = resize(&there, 64, 64, interp).unwrap();
            assert!(back.max_abs_diff(&c) < 1e-12);
        }
        assert!(resize(&g, 0, 4, Interp::Nearest).is_err());
    }

    #[test]
    fn pad_and_crop_roundtrip() {
        let g = random_grid(5, 7, 4);
        let padded = pad_center(&g, 10, 10).unwrap();
        assert_eq!(padded.get(2, 1), g.get(0, 0));
        assert_eq!(padded.get(0, 0), 0.0);
        assert_eq!(crop_center(&padded, 5, 7).unwrap(), g);
        assert!(matches!(crop_center(&g, 6, 7), Err(Error::ShapeMismatch(_))));
        assert!(pad_center(&g, 4, 7).is_err());
    }
}
