//! Deterministic DDIM sampling (reverse) and inversion with a pluggable noise
//! predictor and a hook that may rewrite the predicted clean latent each step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, LatentTensor};

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Linear variance schedule with cumulative products.
///
/// `beta(t)` is defined for `t` in `1..=T`; `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdimSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DdimSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("ddim.steps must be at least 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("empty beta schedule".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self { betas, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

impl Default for DdimSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("default schedule is valid")
    }
}

/// Noise predictor `eps(z_t, t)`. Must return a tensor of the input's shape.
pub trait Denoiser: Send + Sync {
    fn predict(&self, z: &LatentTensor, t: usize) -> LatentTensor;
}

/// Rewrites the predicted clean latent at step `t` of the reverse process.
pub trait InjectionHook: Send + Sync {
    fn apply(&self, z0: &LatentTensor, t: usize) -> Result<LatentTensor>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, z: &LatentTensor, _t: usize) -> LatentTensor {
        LatentTensor::zeros(z.size(), z.num_channels())
    }
}

/// `eps = lambda * z_t`
#[derive(Debug, Clone, Copy)]
pub struct LinearDenoiser {
    pub lambda: f64,
}

impl Denoiser for LinearDenoiser {
    fn predict(&self, z: &LatentTensor, _t: usize) -> LatentTensor {
        z.scale(self.lambda)
    }
}

/// White noise keyed by `(seed, t)` only, independent of the latent's content.
#[derive(Debug, Clone, Copy)]
pub struct SeededNoiseDenoiser {
    pub seed: u64,
    pub sigma: f64,
}

impl Denoiser for SeededNoiseDenoiser {
    fn predict(&self, z: &LatentTensor, t: usize) -> LatentTensor {
        let key = self.seed ^ (t as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let n = z.size();
        let channels = (0..z.num_channels())
            .map(|_| {
                Grid2D::from_fn(n, n, |_, _| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    self.sigma * x
                })
            })
            .collect();
        LatentTensor::new(channels).expect("shape copied from input")
    }
}

/// Serializable choice of built-in denoiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    #[default]
    Zero,
    Linear,
    SeededNoise,
}

impl DenoiserKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "linear" => Ok(Self::Linear),
            "seeded_noise" | "seeded-noise" => Ok(Self::SeededNoise),
            other => Err(Error::Config(format!("unknown denoiser {other:?}"))),
        }
    }

    /// `param` is lambda for `linear` and sigma for `seeded_noise`.
    pub fn build(self, param: f64, seed: u64) -> Box<dyn Denoiser> {
        match self {
            Self::Zero => Box::new(ZeroDenoiser),
            Self::Linear => Box::new(LinearDenoiser { lambda: param }),
            Self::SeededNoise => Box::new(SeededNoiseDenoiser { seed, sigma: param }),
        }
    }
}

fn checked_eps(denoiser: &dyn Denoiser, z: &LatentTensor, t: usize) -> Result<LatentTensor> {
    let eps = denoiser.predict(z, t);
    if eps.shape() != z.shape() {
        return Err(Error::ShapeMismatch(format!(
            "denoiser returned {:?} for input {:?}",
            eps.shape(),
            z.shape()
        )));
    }
    Ok(eps)
}

/// `z0 = (z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`
pub fn predict_z0(z_t: &LatentTensor, eps: &LatentTensor, schedule: &DdimSchedule, t: usize) -> LatentTensor {
    let ab = schedule.alpha_bar(t);
    z_t.axpby(1.0 / ab.sqrt(), eps, -(1.0 - ab).sqrt() / ab.sqrt())
}

/// Predicted clean latent at step `t` using `denoiser`.
pub fn predict_z0_with(
    z_t: &LatentTensor,
    t: usize,
    denoiser: &dyn Denoiser,
    schedule: &DdimSchedule,
) -> Result<LatentTensor> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidInput(format!("timestep {t} outside 1..={}", schedule.steps())));
    }
    let eps = checked_eps(denoiser, z_t, t)?;
    Ok(predict_z0(z_t, &eps, schedule, t))
}

/// Runs `t = T..1`, optionally replacing the predicted `z0` through `hook` before each update.
pub fn reverse(
    z_big_t: &LatentTensor,
    denoiser: &dyn Denoiser,
    schedule: &DdimSchedule,
    hook: Option<&dyn InjectionHook>,
) -> Result<LatentTensor> {
    let mut z = z_big_t.clone();
    for t in (1..=schedule.steps()).rev() {
        let eps = checked_eps(denoiser, &z, t)?;
        let mut z0 = predict_z0(&z, &eps, schedule, t);
        if let Some(hook) = hook {
            let injected = hook.apply(&z0, t)?;
            if injected.shape() != z0.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "injection hook returned {:?} for {:?}",
                    injected.shape(),
                    z0.shape()
                )));
            }
            z0 = injected;
        }
        let prev = schedule.alpha_bar(t - 1);
        z = z0.axpby(prev.sqrt(), &eps, (1.0 - prev).sqrt());
    }
    Ok(z)
}

/// Runs `t = 0..T-1`: `z_{t+1} = sqrt(abar_{t+1}) z0^t + sqrt(1 - abar_{t+1}) eps`.
///
/// The noise estimate for the step from `t` to `t+1` is taken on the current
/// iterate `z_t` but conditioned on timestep `t+1`, which is the timestep the
/// reverse process used for the same transition.
pub fn inverse(z0: &LatentTensor, denoiser: &dyn Denoiser, schedule: &DdimSchedule) -> Result<LatentTensor> {
    let mut z = z0.clone();
    for t in 0..schedule.steps() {
        let eps = checked_eps(denoiser, &z, t + 1)?;
        let clean = predict_z0(&z, &eps, schedule, t);
        let next = schedule.alpha_bar(t + 1);
        z = clean.axpby(next.sqrt(), &eps, (1.0 - next).sqrt());
    }
    Ok(z)
}
