use serde::{Deserialize, Serialize};

use super::detect::AngleEstimate;
use super::mask::TemplateConfig;
use crate::error::Result;
use crate::grid::{gamma, rotate, zoom_about_center, Interp, LatentTensor};

/// Spatial rescale factors tried for pure-scaling attacks.
pub const SCALE_SWEEP: [f64; 11] = [0.75, 0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2, 1.25];

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionCandidate {
    /// Rotation undone, degrees in `[0, 360)`.
    pub theta_b: f64,
    /// Spatial rescale applied before the rotation, if any.
    pub rescale: Option<f64>,
    pub latent: LatentTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPlan {
    pub theta_b: f64,
    pub rescale: Option<f64>,
}

fn near(a: f64, b: f64, period: f64, tol: f64) -> bool {
    let d = (a - b).rem_euclid(period);
    d.min(period - d) <= tol
}

/// Which (rotation, rescale) pairs to try for an estimate. The rotation is
/// ambiguous by 180 degrees, so every plan appears once per branch.
pub fn correction_plans(estimate: &AngleEstimate, cfg: &TemplateConfig) -> Vec<CorrectionPlan> {
    let theta_a = (estimate.theta_hat - cfg.base_angle).rem_euclid(180.0);
    let pure_scale = estimate.scale_flag && near(theta_a, 0.0, 180.0, cfg.step);
    let mut plans = Vec::new();
    for theta_b in [theta_a, theta_a + 180.0] {
        let on_axis = near(theta_b, 0.0, 90.0, 1e-9);
        let mut rescales: Vec<Option<f64>> = Vec::new();
        if pure_scale {
            rescales.extend(SCALE_SWEEP.iter().map(|&f| Some(f)));
            rescales.push(Some(estimate.radius_scale));
        } else if estimate.scale_flag || !on_axis {
            let crop_factor = 1.0 / gamma(theta_b);
            rescales.push(Some(crop_factor));
            if estimate.scale_flag && (estimate.radius_scale - crop_factor).abs() > 0.02 {
                rescales.push(Some(estimate.radius_scale));
            }
            if !estimate.scale_flag {
                // rotation with zero-filled corners keeps the original scale
                rescales.push(None);
            }
        } else {
            rescales.push(None);
        }
        for rescale in rescales {
            let rescale = rescale.filter(|f| (f - 1.0).abs() > 1e-12);
            let plan = CorrectionPlan { theta_b, rescale };
            if !plans.contains(&plan) {
                plans.push(plan);
            }
        }
    }
    plans
}

/// Undoes one plan: rescale about the center first, then rotate back by `-theta_b`.
pub fn apply_plan(z: &LatentTensor, plan: &CorrectionPlan, interp: Interp) -> Result<LatentTensor> {
    z.try_map_channels(|_, g| {
        let scaled = match plan.rescale {
            Some(f) => zoom_about_center(g, f, interp)?,
            None => g.clone(),
        };
        rotate(&scaled, -plan.theta_b, interp)
    })
}

/// All correction candidates for `z`; the caller keeps whichever scores best.
pub fn correct(z: &LatentTensor, estimate: &AngleEstimate, cfg: &TemplateConfig) -> Result<Vec<CorrectionCandidate>> {
    correction_plans(estimate, cfg)
        .into_iter()
        .map(|plan| {
            Ok(CorrectionCandidate {
                theta_b: plan.theta_b,
                rescale: plan.rescale,
                latent: apply_plan(z, &plan, Interp::Bilinear)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn estimate(theta_hat: f64, scale_flag: bool) -> AngleEstimate {
        AngleEstimate {
            theta_hat,
            mean_magnitude: 1.0,
            scale_flag,
            runner_up_margin: 1.0,
            radius_scale: 1.0,
            median_magnitude: 1.0,
        }
    }

    fn random_latent() -> LatentTensor {
        use crate::ddim::{Denoiser, SeededNoiseDenoiser};
        SeededNoiseDenoiser { seed: 1, sigma: 1.0 }.predict(&LatentTensor::zeros(64, 2), 0)
    }

    #[test]
    fn unrotated_unscaled_gives_identity_branch() {
        let cfg = TemplateConfig::default();
        let z = random_latent();
        let candidates = correct(&z, &estimate(45.0, false), &cfg).unwrap();
        assert_eq!(candidates.len(), 2);
        assert_eq!(candidates[0].theta_b, 0.0);
        assert_eq!(candidates[0].rescale, None);
        assert_eq!(candidates[0].latent, z);
        assert_eq!(candidates[1].theta_b, 180.0);
    }

    #[test]
    fn quarter_turn_is_a_pure_lattice_rotation() {
        let cfg = TemplateConfig::default();
        let z = random_latent();
        let rotated = z.try_map_channels(|_, g| rotate(g, 90.0, Interp::Bilinear)).unwrap();
        let candidates = correct(&rotated, &estimate(135.0, false), &cfg).unwrap();
        assert!(candidates.iter().all(|c| c.rescale.is_none()));
        let back = candidates.iter().find(|c| c.theta_b == 90.0).unwrap();
        assert!(back.latent.max_abs_diff(&z) < 1e-12);
    }

    #[test]
    fn oblique_angle_plans_include_gamma_rescale() {
        let cfg = TemplateConfig::default();
        let plans = correction_plans(&estimate(75.0, false), &cfg);
        let thirty: Vec<_> = plans.iter().filter(|p| p.theta_b == 30.0).collect();
        assert!(thirty.iter().any(|p| (p.rescale.unwrap_or(0.0) - 1.0 / gamma(30.0)).abs() < 1e-12));
        assert!(thirty.iter().any(|p| p.rescale.is_none()));
        assert!(plans.iter().any(|p| p.theta_b == 210.0));
    }

    #[test]
    fn pure_scale_sweeps() {
        let cfg = TemplateConfig::default();
        let mut est = estimate(45.0, true);
        est.radius_scale = 0.8;
        let plans = correction_plans(&est, &cfg);
        let zero_branch: Vec<_> = plans.iter().filter(|p| p.theta_b == 0.0).collect();
        // 11 sweep factors with 1.0 folded to None, plus the estimated factor already in the sweep
        assert_eq!(zero_branch.len(), 11);
        assert!(zero_branch.iter().any(|p| p.rescale.is_none()));
    }

    #[test]
    fn zoom_roundtrip_on_constant() {
        let g = Grid2D::filled(64, 64, 3.0);
        let up = zoom_about_center(&g, 1.25, Interp::Bilinear).unwrap();
        assert!(up.values().iter().all(|&v| (v - 3.0).abs() < 1e-12));
        let down = zoom_about_center(&g, 0.5, Interp::Bilinear).unwrap();
        assert_eq!(down.get(32, 32), 3.0);
        assert_eq!(down.get(0, 0), 0.0);
    }
}
