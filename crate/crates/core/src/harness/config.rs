use serde::{Deserialize, Serialize};

use crate::attacks::{builtin_preset, parse_pipeline, parse_preset, AttackPipeline};
use crate::channel::ChannelConfig;
use crate::codec::ReplicationConfig;
use crate::error::{Error, Result};
use crate::template::TemplateConfig;

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_FPR: f64 = 1e-3;

/// Everything a campaign needs. Loads from TOML with `[replication]`,
/// `[template]`, `[channel]` and `[channel.ddim]` sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed_base: u64,
    pub fpr: f64,
    pub latent_size: usize,
    pub latent_channels: usize,
    /// Shipped preset name, preset file path, or inline pipeline. Empty means clean only.
    pub attacks: String,
    /// Prepend an unattacked row.
    pub include_clean: bool,
    /// Unwatermarked latents pushed through the clean channel to measure FPR; 0 skips.
    pub negatives: usize,
    /// Inject and use the template. Off means no geometric correction at all.
    pub use_template: bool,
    pub replication: ReplicationConfig,
    pub template: TemplateConfig,
    pub channel: ChannelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            seed_base: 0,
            fpr: DEFAULT_FPR,
            latent_size: 64,
            latent_channels: 4,
            attacks: String::new(),
            include_clean: true,
            negatives: 0,
            use_template: true,
            replication: ReplicationConfig::default(),
            template: TemplateConfig::default(),
            channel: ChannelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.latent_size, self.latent_size, self.latent_channels)
    }

    pub fn template(&self) -> Option<&TemplateConfig> {
        self.use_template.then_some(&self.template)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.fpr > 0.0 && self.fpr <= 0.5) {
            return Err(Error::Config(format!("fpr {} outside (0, 0.5]", self.fpr)));
        }
        self.replication.payload_dims(self.latent_shape())?;
        self.template.validate()?;
        self.channel.validate()?;
        if self.channel.attacks.is_some() {
            return Err(Error::Config("put attacks in the top-level `attacks` key, not in [channel]".into()));
        }
        self.attack_rows()?;
        Ok(())
    }

    /// The attack rows of a campaign; `None` is the clean row.
    pub fn attack_rows(&self) -> Result<Vec<Option<AttackPipeline>>> {
        let mut rows = Vec::new();
        if self.include_clean {
            rows.push(None);
        }
        rows.extend(resolve_attacks(&self.attacks)?.into_iter().map(Some));
        if rows.is_empty() {
            return Err(Error::Config("no attack rows and include_clean is false".into()));
        }
        Ok(rows)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            position: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Resolves `spec` as a shipped preset name, then a readable file, then an inline pipeline.
pub fn resolve_attacks(spec: &str) -> Result<Vec<AttackPipeline>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(parsed) = builtin_preset(spec) {
        return parsed;
    }
    let path = std::path::Path::new(spec);
    if path.is_file() {
        return parse_preset(&std::fs::read_to_string(path)?);
    }
    Ok(vec![parse_pipeline(spec)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelMode;

    #[test]
    fn toml_sections_roundtrip() {
        let text = r#"
trials = 10
fpr = 0.01
attacks = "stirmark_rst"

[replication]
f_hw = 2
f_c = 1

[template]
eta = 7.0

[channel]
mode = "ddim_noisy"
sigma = 0.3

[channel.ddim]
steps = 25
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.template.eta, 7.0);
        assert_eq!(cfg.template.theta_d, 60.0);
        assert_eq!(cfg.channel.mode, ChannelMode::DdimNoisy);
        assert_eq!(cfg.channel.ddim.steps, 25);
        assert_eq!(cfg.attack_rows().unwrap().len(), 26);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Parse { .. })));
        assert!(ExperimentConfig::from_toml("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml("fpr = 0.7").is_err());
        assert!(ExperimentConfig::from_toml("attacks = \"nope(x=1)\"").is_err());
        assert!(ExperimentConfig::from_toml("include_clean = false").is_err());
    }

    #[test]
    fn inline_pipeline_is_one_row() {
        let rows = resolve_attacks("rotate_crop_rescale(theta=45)|jpeg_proxy(q=50)").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].attacks().len(), 2);
    }
}
