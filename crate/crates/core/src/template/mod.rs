//! X-shaped Fourier template: construction, injection during sampling,
//! angle and scale detection, and geometric correction of the recovered latent.

mod correct;
mod detect;
mod inject;
mod mask;

pub use correct::{
    apply_plan, correct, correction_plans, CorrectionCandidate, CorrectionPlan, SCALE_SWEEP,
};
pub use detect::{
    angle_profile, angle_profile_from_map, detect_angle, detect_angle_with_profile, detect_scale,
    magnitude_map, profile_csv, AngleEstimate, ProfilePoint,
};
pub use crate::grid::gamma;
pub use inject::{inject, inject_scoped, suppress_spectral_peaks, SigmaScope, TemplateInjector};
pub use mask::{build_mask, ScaleSearch, TemplateConfig, TemplateMask};
