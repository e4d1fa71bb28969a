use serde::Serialize;

use crate::codec::{
    score_values, verify, Decision, ExtractionPlan, ReplicationConfig, ShuffleKeySet, WatermarkVector,
};
use crate::error::{Error, Result};
use crate::grid::LatentTensor;
use crate::template::{
    correction_plans, apply_plan, detect_angle, suppress_spectral_peaks, AngleEstimate, CorrectionPlan,
    TemplateConfig,
};

/// Latents to score for one received `z'_T`.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub estimate: Option<AngleEstimate>,
    pub template_present: bool,
    /// Parallel to `latents`; `None` is the received latent as is.
    pub plans: Vec<Option<CorrectionPlan>>,
    pub latents: Vec<LatentTensor>,
}

/// Template-side decoding: angle estimate, presence gate, peak suppression,
/// correction branches. Without a present template the received latent is the
/// only candidate, so template-free inputs get a single score at the nominal FPR.
pub fn candidates(z: &LatentTensor, template: Option<&TemplateConfig>) -> Result<Candidates> {
    let raw = |estimate| Candidates {
        estimate,
        template_present: false,
        plans: vec![None],
        latents: vec![z.clone()],
    };
    let Some(cfg) = template else {
        return Ok(raw(None));
    };
    let estimate = match detect_angle(z, cfg) {
        Ok(e) => e,
        Err(Error::NoTemplate) => return Ok(raw(None)),
        Err(e) => return Err(e),
    };
    if !estimate.template_present(cfg) {
        return Ok(raw(Some(estimate)));
    }
    let cleaned = suppress_spectral_peaks(z, cfg.suppress_k)?;
    let plans = correction_plans(&estimate, cfg);
    let latents = plans
        .iter()
        .map(|p| apply_plan(&cleaned, p, crate::grid::Interp::Bilinear))
        .collect::<Result<Vec<_>>>()?;
    Ok(Candidates {
        estimate: Some(estimate),
        template_present: true,
        plans: plans.into_iter().map(Some).collect(),
        latents,
    })
}

/// Best keyed score over the candidates.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub score: f64,
    pub threshold: f64,
    pub detected: bool,
    pub theta_hat: Option<f64>,
    /// Rotation implied by the estimate, `(theta_hat - base) mod 180`.
    pub attack_angle: Option<f64>,
    pub scale_flag: Option<bool>,
    pub template_present: bool,
    pub best_plan: Option<CorrectionPlan>,
    pub candidates: usize,
}

pub fn verify_latent(
    z: &LatentTensor,
    watermark: &WatermarkVector,
    keys: &ShuffleKeySet,
    replication: &ReplicationConfig,
    template: Option<&TemplateConfig>,
    threshold: f64,
) -> Result<VerifyOutcome> {
    let c = candidates(z, template)?;
    let plan = ExtractionPlan::new(keys, replication, z.shape())?;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, latent) in c.latents.iter().enumerate() {
        let s = score_values(watermark.values(), &plan.extract_flat(&latent.to_values()))?.value;
        if s > best.0 {
            best = (s, i);
        }
    }
    let base = template.map(|t| t.base_angle).unwrap_or(0.0);
    Ok(VerifyOutcome {
        score: best.0,
        threshold,
        detected: verify(best.0, threshold) == Decision::Detected,
        theta_hat: c.estimate.map(|e| e.theta_hat),
        attack_angle: c.estimate.filter(|_| c.template_present).map(|e| (e.theta_hat - base).rem_euclid(180.0)),
        scale_flag: c.estimate.map(|e| e.scale_flag),
        template_present: c.template_present,
        best_plan: c.plans[best.1],
        candidates: c.latents.len(),
    })
}

/// Distance between two angles modulo 180 degrees.
pub fn angle_error_mod180(estimate: f64, truth: f64) -> f64 {
    let d = (estimate - truth).rem_euclid(180.0);
    d.min(180.0 - d)
}
