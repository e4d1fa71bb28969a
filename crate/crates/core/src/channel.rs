//! Simulated generation, distortion and inversion between embedding and extraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackDomain, AttackPipeline};
use crate::ddim::{
    inverse, reverse, DdimSchedule, Denoiser, DenoiserKind, InjectionHook, DEFAULT_BETA_END, DEFAULT_BETA_START,
    DEFAULT_STEPS,
};
use crate::error::{Error, Result};
use crate::grid::LatentTensor;
use crate::template::{build_mask, TemplateConfig, TemplateInjector};

/// Inversion noise used by `ddim_noisy` when no sigma is given.
pub const DEFAULT_NOISY_SIGMA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Attacks and noise act on `z_T` directly; no sampling, no template.
    #[default]
    Identity,
    /// Noiseless reverse, attack, inverse.
    Ddim,
    /// As `ddim`, plus Gaussian noise before inversion.
    DdimNoisy,
}

impl std::str::FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "ddim" => Ok(Self::Ddim),
            "ddim_noisy" | "ddim-noisy" => Ok(Self::DdimNoisy),
            other => Err(Error::Config(format!("unknown channel mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdimConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub denoiser: DenoiserKind,
    /// Lambda for `linear`, sigma for `seeded_noise`.
    pub denoiser_param: f64,
    pub denoiser_seed: u64,
}

impl Default for DdimConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            denoiser: DenoiserKind::Zero,
            denoiser_param: 0.0,
            denoiser_seed: 0,
        }
    }
}

impl DdimConfig {
    pub fn schedule(&self) -> Result<DdimSchedule> {
        DdimSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }

    pub fn build_denoiser(&self) -> Box<dyn Denoiser> {
        self.denoiser.build(self.denoiser_param, self.denoiser_seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub ddim: DdimConfig,
    /// Standard deviation of the additive noise; must be 0 in `ddim` mode.
    pub sigma: f64,
    pub attacks: Option<AttackPipeline>,
    pub domain: AttackDomain,
}

impl ChannelConfig {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn ddim_zero() -> Self {
        Self { mode: ChannelMode::Ddim, ..Self::default() }
    }

    pub fn ddim_noisy(sigma: f64) -> Self {
        Self { mode: ChannelMode::DdimNoisy, sigma, ..Self::default() }
    }

    pub fn with_attacks(mut self, attacks: Option<AttackPipeline>) -> Self {
        self.attacks = attacks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("channel.sigma {} must be nonnegative", self.sigma)));
        }
        if self.mode == ChannelMode::Ddim && self.sigma != 0.0 {
            return Err(Error::Config("channel mode ddim is noiseless; use ddim_noisy for sigma > 0".into()));
        }
        if self.mode != ChannelMode::Identity {
            self.ddim.schedule()?;
        }
        if let AttackDomain::PixelProxy { scale: 0 } = self.domain {
            return Err(Error::Config("pixel proxy scale must be positive".into()));
        }
        Ok(())
    }
}

/// A channel prepared for one latent shape.
pub struct Channel {
    config: ChannelConfig,
    schedule: Option<DdimSchedule>,
    denoiser: Box<dyn Denoiser>,
    injector: Option<TemplateInjector>,
}

impl Channel {
    /// `template` is injected during the reverse process; identity mode ignores it.
    pub fn new(config: &ChannelConfig, latent_size: usize, template: Option<&TemplateConfig>) -> Result<Self> {
        config.validate()?;
        let schedule = match config.mode {
            ChannelMode::Identity => None,
            _ => Some(config.ddim.schedule()?),
        };
        let injector = match (config.mode, template) {
            (ChannelMode::Identity, _) | (_, None) => None,
            (_, Some(t)) => {
                t.validate()?;
                Some(TemplateInjector::new(build_mask(latent_size, latent_size, t)?, t.eta))
            }
        };
        Ok(Self { config: config.clone(), schedule, denoiser: config.ddim.build_denoiser(), injector })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn injects_template(&self) -> bool {
        self.injector.is_some()
    }

    /// Reverse process only: the generated clean latent. Identity mode returns the input.
    pub fn generate(&self, z_t: &LatentTensor) -> Result<LatentTensor> {
        match &self.schedule {
            None => Ok(z_t.clone()),
            Some(s) => reverse(z_t, self.denoiser.as_ref(), s, self.injector.as_ref().map(|i| i as &dyn InjectionHook)),
        }
    }

    /// Attacks, then noise drawn from `noise_seed`.
    pub fn distort(&self, z: &LatentTensor, noise_seed: u64) -> Result<LatentTensor> {
        let attacked = match &self.config.attacks {
            Some(p) => p.apply(z, self.config.domain)?,
            None => z.clone(),
        };
        Ok(add_noise(&attacked, self.config.sigma, noise_seed))
    }

    /// Inversion back to the initial-noise space. Identity mode returns the input.
    pub fn invert(&self, z0: &LatentTensor) -> Result<LatentTensor> {
        match &self.schedule {
            None => Ok(z0.clone()),
            Some(s) => inverse(z0, self.denoiser.as_ref(), s),
        }
    }

    /// `z_T^w` to `z'_T`.
    pub fn transmit(&self, z_t: &LatentTensor, noise_seed: u64) -> Result<LatentTensor> {
        self.invert(&self.distort(&self.generate(z_t)?, noise_seed)?)
    }
}

/// One-shot convenience around [`Channel`].
pub fn transmit(
    z_t: &LatentTensor,
    config: &ChannelConfig,
    template: Option<&TemplateConfig>,
    noise_seed: u64,
) -> Result<LatentTensor> {
    Channel::new(config, z_t.size(), template)?.transmit(z_t, noise_seed)
}

pub fn add_noise(z: &LatentTensor, sigma: f64, seed: u64) -> LatentTensor {
    if sigma == 0.0 {
        return z.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..z.len())
        .map(|_| {
            let n: f64 = StandardNormal.sample(&mut rng);
            sigma * n
        })
        .collect();
    let values: Vec<f64> = z.to_values().iter().zip(noise).map(|(v, n)| v + n).collect();
    LatentTensor::from_values(z.size(), z.num_channels(), values).expect("shape copied from input")
}
