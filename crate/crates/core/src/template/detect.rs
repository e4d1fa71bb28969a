use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inject::centered_spectrum;
use super::mask::{build_mask, TemplateConfig};
use crate::error::{Error, Result};
use crate::grid::{mean, population_std, sin_cos_deg, Grid2D, Interp, LatentTensor};
#[cfg(test)]
use crate::grid::gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    /// Orientation of the first template line, degrees in `[0, 180)`.
    pub theta_hat: f64,
    pub mean_magnitude: f64,
    pub scale_flag: bool,
    /// Best objective minus the best candidate at least 5 degrees away.
    pub runner_up_margin: f64,
    /// Radius factor at which the template was found (1 = nominal radii).
    pub radius_scale: f64,
    pub median_magnitude: f64,
}

impl AngleEstimate {
    /// Margin in units of the median spectral magnitude.
    pub fn relative_margin(&self) -> f64 {
        if self.median_magnitude > 0.0 {
            self.runner_up_margin / self.median_magnitude
        } else {
            0.0
        }
    }

    pub fn template_present(&self, cfg: &TemplateConfig) -> bool {
        self.relative_margin() >= cfg.presence_ratio
    }
}

/// One row of the angle search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub theta: f64,
    pub mean_magnitude: f64,
    pub radius_scale: f64,
}

/// Mean over channels of the centered magnitude spectrum.
pub fn magnitude_map(z: &LatentTensor) -> Result<Grid2D> {
    let (h, w, c) = z.shape();
    if h % 2 != 0 {
        return Err(Error::UnsupportedShape(format!("odd latent size {h}")));
    }
    let mut acc = vec![0.0; h * w];
    for ch in z.channels() {
        let spectrum = centered_spectrum(ch)?;
        for (a, v) in acc.iter_mut().zip(spectrum.values()) {
            *a += v.norm();
        }
    }
    let inv = 1.0 / c as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    Grid2D::new(h, w, acc)
}

fn lookup(map: &Grid2D, row: f64, col: f64, interp: Interp) -> f64 {
    let (h, w) = map.dims();
    let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w;
    match interp {
        Interp::Nearest => {
            let (r, c) = (row.round() as isize, col.round() as isize);
            if inside(r, c) {
                map.get(r as usize, c as usize)
            } else {
                0.0
            }
        }
        Interp::Bilinear => {
            let (r0, c0) = (row.floor(), col.floor());
            let (fr, fc) = (row - r0, col - c0);
            let (r0, c0) = (r0 as isize, c0 as isize);
            let mut acc = 0.0;
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    let weight = wr * wc;
                    if weight > 0.0 && inside(r0 + dr, c0 + dc) {
                        acc += weight * map.get((r0 + dr) as usize, (c0 + dc) as usize);
                    }
                }
            }
            acc
        }
    }
}

/// Mask points as offsets from the spectrum center.
fn mask_offsets(map: &Grid2D, cfg: &TemplateConfig) -> Result<Vec<(f64, f64)>> {
    let (h, w) = map.dims();
    let mask = build_mask(h, w, cfg)?;
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    Ok(mask.points().iter().map(|&(r, c)| (r as f64 - cy, c as f64 - cx)).collect())
}

/// Mean magnitude over the mask points rotated from `base_angle` to `theta` and scaled by `scale`.
fn template_mean(map: &Grid2D, offsets: &[(f64, f64)], cfg: &TemplateConfig, theta: f64, scale: f64) -> f64 {
    let (h, w) = map.dims();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let (s, c) = sin_cos_deg(theta - cfg.base_angle);
    let sum: f64 = offsets
        .iter()
        .map(|&(dr, dc)| {
            let row = scale * (dr * c - dc * s);
            let col = scale * (dr * s + dc * c);
            match cfg.lookup {
                Interp::Nearest => lookup(map, cy + row.round(), cx + col.round(), Interp::Nearest),
                Interp::Bilinear => lookup(map, cy + row, cx + col, Interp::Bilinear),
            }
        })
        .sum();
    sum / offsets.len() as f64
}

fn candidate_angles(step: f64) -> Vec<f64> {
    let n = (180.0 / step - 1e-9).ceil() as usize;
    (0..n).map(|i| i as f64 * step).collect()
}

/// Objective of every candidate angle, each at its best radius factor.
pub fn angle_profile_from_map(map: &Grid2D, cfg: &TemplateConfig) -> Result<Vec<ProfilePoint>> {
    cfg.validate()?;
    let scales = cfg.scales.factors();
    let offsets = mask_offsets(map, cfg)?;
    Ok(candidate_angles(cfg.step)
        .into_par_iter()
        .map(|theta| {
            let (mean_magnitude, radius_scale) = scales
                .iter()
                .map(|&s| (template_mean(map, &offsets, cfg, theta, s), s))
                .fold((f64::NEG_INFINITY, 1.0), |best, cur| if cur.0 > best.0 { cur } else { best });
            ProfilePoint { theta, mean_magnitude, radius_scale }
        })
        .collect())
}

pub fn angle_profile(z: &LatentTensor, cfg: &TemplateConfig) -> Result<Vec<ProfilePoint>> {
    angle_profile_from_map(&magnitude_map(z)?, cfg)
}

fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Index of the maximum; among exact ties, the middle of the longest circular run.
fn argmax_plateau(values: &[f64]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = values.len();
    let is_top = |i: usize| values[i % n] == best;
    if (0..n).all(is_top) {
        return 0;
    }
    // start scanning just after a non-top entry so runs do not wrap mid-way
    let start = (0..n).find(|&i| !is_top(i)).unwrap() + 1;
    let (mut best_start, mut best_len) = (0, 0);
    let mut i = 0;
    while i < n {
        if is_top(start + i) {
            let run_start = i;
            while i < n && is_top(start + i) {
                i += 1;
            }
            if i - run_start > best_len {
                best_len = i - run_start;
                best_start = run_start;
            }
        } else {
            i += 1;
        }
    }
    (start + best_start + (best_len - 1) / 2) % n
}

fn summarize(map: &Grid2D, profile: &[ProfilePoint], cfg: &TemplateConfig) -> Result<AngleEstimate> {
    let mags = map.values();
    let spread = population_std(mags);
    if !(spread > 1e-12 * mean(mags).abs().max(1.0)) {
        return Err(Error::NoTemplate);
    }
    let objective: Vec<f64> = profile.iter().map(|p| p.mean_magnitude).collect();
    let best = argmax_plateau(&objective);
    let top = profile[best];
    let runner_up = profile
        .iter()
        .filter(|p| circular_distance(p.theta, top.theta, 180.0) >= 5.0 - 1e-9)
        .map(|p| p.mean_magnitude)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = mags.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median_magnitude = sorted[sorted.len() / 2];
    Ok(AngleEstimate {
        theta_hat: top.theta,
        mean_magnitude: top.mean_magnitude,
        scale_flag: detect_scale_in_map(map, top.theta, cfg),
        runner_up_margin: if runner_up.is_finite() { (top.mean_magnitude - runner_up).max(0.0) } else { 0.0 },
        radius_scale: top.radius_scale,
        median_magnitude,
    })
}

pub fn detect_angle(z: &LatentTensor, cfg: &TemplateConfig) -> Result<AngleEstimate> {
    detect_angle_with_profile(z, cfg).map(|(est, _)| est)
}

pub fn detect_angle_with_profile(z: &LatentTensor, cfg: &TemplateConfig) -> Result<(AngleEstimate, Vec<ProfilePoint>)> {
    let map = magnitude_map(z)?;
    let profile = angle_profile_from_map(&map, cfg)?;
    Ok((summarize(&map, &profile, cfg)?, profile))
}

/// CSV with header `theta,mean_magnitude,radius_scale`.
pub fn profile_csv(profile: &[ProfilePoint]) -> String {
    let mut out = String::from("theta,mean_magnitude,radius_scale\n");
    for p in profile {
        out.push_str(&format!("{},{},{}\n", p.theta, p.mean_magnitude, p.radius_scale));
    }
    out
}

fn ring_median(map: &Grid2D, r: isize, c: isize) -> Option<f64> {
    let (h, w) = (map.height() as isize, map.width() as isize);
    let mut ring = Vec::with_capacity(8);
    for dr in -1..=1 {
        for dc in -1..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (rr, cc) = (r + dr, c + dc);
            if rr < 0 || cc < 0 || rr >= h || cc >= w {
                return None;
            }
            ring.push(map.get(rr as usize, cc as usize));
        }
    }
    ring.sort_by(f64::total_cmp);
    Some(0.5 * (ring[3] + ring[4]))
}

fn detect_scale_in_map(map: &Grid2D, theta_hat: f64, cfg: &TemplateConfig) -> bool {
    let (h, w) = map.dims();
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let outer = cfg.radii.last().copied().unwrap_or(0.5) * w as f64 / 2.0;
    // every line must show its outer point somewhere within the angular slack
    let line_present = |line: usize| {
        let mut best_ratio: f64 = 0.0;
        for slack in [-cfg.step, 0.0, cfg.step] {
            let alpha = cfg.line_angles(theta_hat + slack)[line];
            let (s, c) = sin_cos_deg(alpha);
            for sign in [1.0, -1.0] {
                let r = (cy + sign * (outer * c).round()) as isize;
                let col = (cx + sign * (outer * s).round()) as isize;
                if let Some(med) = ring_median(map, r, col) {
                    let v = map.get(r as usize, col as usize);
                    let ratio = if med > 0.0 { v / med } else if v > 0.0 { f64::INFINITY } else { 0.0 };
                    best_ratio = best_ratio.max(ratio);
                }
            }
        }
        best_ratio >= cfg.kappa
    };
    !(line_present(0) && line_present(1))
}

/// True when the outermost template points no longer stand out from their
/// neighbourhood at the detected angle, i.e. the latent was rescaled.
pub fn detect_scale(z: &LatentTensor, theta_hat: f64, cfg: &TemplateConfig) -> Result<bool> {
    cfg.validate()?;
    Ok(detect_scale_in_map(&magnitude_map(z)?, theta_hat, cfg))
}
