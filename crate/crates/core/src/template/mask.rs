use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sin_cos_deg, Grid2D, Interp};

/// Radius search used by angle detection, as factors of the nominal template radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSearch {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ScaleSearch {
    /// Only the nominal radii.
    pub const NOMINAL: ScaleSearch = ScaleSearch { min: 1.0, max: 1.0, step: 1.0 };

    pub fn factors(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

impl Default for ScaleSearch {
    fn default() -> Self {
        Self { min: 0.45, max: 1.5, step: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    /// Angle between the two lines of the X, degrees.
    pub theta_d: f64,
    /// Orientation of the first line at injection, degrees.
    pub base_angle: f64,
    /// Point radii as fractions of `w/2`, strictly increasing.
    pub radii: Vec<f64>,
    pub eta: f64,
    /// Angular step of the candidate search, degrees.
    pub step: f64,
    /// Peak-to-ring ratio below which the outer points count as moved.
    pub kappa: f64,
    pub scales: ScaleSearch,
    /// How candidate points read the magnitude map.
    pub lookup: Interp,
    /// Minimum `margin / median magnitude` for the template to count as present.
    pub presence_ratio: f64,
    /// Spectral bins above `suppress_k` times their ring median are zeroed before extraction; 0 disables.
    pub suppress_k: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            theta_d: 60.0,
            base_angle: 45.0,
            radii: vec![0.2, 0.3, 0.4, 0.5],
            eta: 5.0,
            step: 1.0,
            kappa: 1.5,
            scales: ScaleSearch::default(),
            lookup: Interp::Bilinear,
            presence_ratio: 1.0,
            suppress_k: 4.0,
        }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.theta_d > 0.0 && self.theta_d < 180.0) {
            return bad(format!("theta_d {} outside (0, 180)", self.theta_d));
        }
        if !self.base_angle.is_finite() {
            return bad("base_angle must be finite".into());
        }
        if self.radii.is_empty() || self.radii.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("radii {:?} must lie in (0, 1]", self.radii));
        }
        if self.radii.windows(2).any(|p| p[0] >= p[1]) {
            return bad(format!("radii {:?} must be strictly increasing", self.radii));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be a nonnegative number", self.eta));
        }
        if !(self.step > 0.0 && self.step <= 45.0) {
            return bad(format!("step {} outside (0, 45]", self.step));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa {} must be positive", self.kappa));
        }
        let s = self.scales;
        if !(s.min > 0.0 && s.min <= s.max && s.step > 0.0 && s.max.is_finite()) {
            return bad(format!("scale search {s:?} is not a valid range"));
        }
        if !(self.presence_ratio >= 0.0 && self.suppress_k >= 0.0) {
            return bad("presence_ratio and suppress_k must be nonnegative".into());
        }
        Ok(())
    }

    /// Line orientations `[base, base + theta_d]`.
    pub fn line_angles(&self, base: f64) -> [f64; 2] {
        [base, base + self.theta_d]
    }
}

/// Offsets `(row, col)` from the spectrum center for both directions of one line.
pub(crate) fn line_offsets(alpha_deg: f64, radii_px: impl Iterator<Item = f64>) -> Vec<(f64, f64)> {
    let (s, c) = sin_cos_deg(alpha_deg);
    radii_px.flat_map(|r| [(r * c, r * s), (-r * c, -r * s)]).collect()
}

/// Point set of the X and its binary grid, in center-shifted spectrum coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMask {
    height: usize,
    width: usize,
    points: Vec<(usize, usize)>,
    grid: Grid2D,
}

impl TemplateMask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.grid.get(row, col) != 0.0
    }
}

pub fn build_mask(h: usize, w: usize, cfg: &TemplateConfig) -> Result<TemplateMask> {
    cfg.validate()?;
    if h != w || h % 2 != 0 || h == 0 {
        return Err(Error::UnsupportedShape(format!("template needs an even square grid, got {h}x{w}")));
    }
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let half = w as f64 / 2.0;
    let mut points = Vec::new();
    for alpha in cfg.line_angles(cfg.base_angle) {
        for (dr, dc) in line_offsets(alpha, cfg.radii.iter().map(|r| r * half)) {
            let (r, c) = (cy + dr.round(), cx + dc.round());
            if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
                return Err(Error::GeometryDegenerate { points: points.len() });
            }
            let p = (r as usize, c as usize);
            if !points.contains(&p) {
                points.push(p);
            }
        }
    }
    let expected = 4 * cfg.radii.len();
    if points.len() < expected.min(12) {
        return Err(Error::GeometryDegenerate { points: points.len() });
    }
    let mut grid = Grid2D::zeros(h, w);
    for &(r, c) in &points {
        grid.set(r, c, 1.0);
    }
    Ok(TemplateMask { height: h, width: w, points, grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mask_has_sixteen_points_at_expected_radii() {
        let cfg = TemplateConfig { base_angle: 0.0, theta_d: 90.0, ..Default::default() };
        let mask = build_mask(64, 64, &cfg).unwrap();
        assert_eq!(mask.points().len(), 16);
        let mut radii: Vec<usize> = mask
            .points()
            .iter()
            .filter(|&&(r, _)| r == 32)
            .map(|&(_, c)| (c as isize - 32).unsigned_abs())
            .collect();
        radii.sort_unstable();
        radii.dedup();
        assert_eq!(radii, vec![6, 10, 13, 16]);
        // axes only
        assert!(mask.points().iter().all(|&(r, c)| r == 32 || c == 32));
    }

    #[test]
    fn mask_is_point_symmetric() {
        for base in [0.0, 17.0, 45.0, 100.0] {
            let cfg = TemplateConfig { base_angle: base, ..Default::default() };
            let mask = build_mask(64, 64, &cfg).unwrap();
            assert_eq!(mask.points().len(), 16, "base {base}");
            for &(r, c) in mask.points() {
                assert!(mask.contains(64 - r, 64 - c));
            }
            assert_eq!(mask.grid().values().iter().sum::<f64>(), 16.0);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(build_mask(64, 32, &TemplateConfig::default()).is_err());
        assert!(build_mask(63, 63, &TemplateConfig::default()).is_err());
        let tiny = TemplateConfig { radii: vec![0.01, 0.02, 0.03, 0.04], ..Default::default() };
        assert!(matches!(build_mask(64, 64, &tiny), Err(Error::GeometryDegenerate { .. })));
        let unordered = TemplateConfig { radii: vec![0.3, 0.2], ..Default::default() };
        assert!(build_mask(64, 64, &unordered).is_err());
        let flat = TemplateConfig { theta_d: 180.0, ..Default::default() };
        assert!(build_mask(64, 64, &flat).is_err());
    }

    #[test]
    fn scale_factors_cover_range() {
        let f = ScaleSearch { min: 0.5, max: 1.0, step: 0.25 }.factors();
        assert_eq!(f, vec![0.5, 0.75, 1.0]);
        assert_eq!(ScaleSearch::NOMINAL.factors(), vec![1.0]);
    }
}
