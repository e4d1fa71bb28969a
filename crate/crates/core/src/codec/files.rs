//! On-disk key and registry formats (JSON).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detect::{UserEntry, UserRegistry};
use super::keys::MasterSeed;
use super::payload::ReplicationConfig;
use crate::error::{Error, Result};

pub const KEY_FILE_VERSION: u32 = 1;
pub const KDF_NAME: &str = "sha256-concat";
pub const TILING_NAME: &str = "cgm-rowmajor";

/// Everything a verifier needs besides the image: the seed plus the layout it was embedded with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub version: u32,
    pub master_seed: MasterSeed,
    pub f_hw: usize,
    pub f_c: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kdf: String,
    pub tiling: String,
}

impl KeyFile {
    pub fn new(master_seed: MasterSeed, replication: ReplicationConfig, latent_shape: (usize, usize, usize)) -> Result<Self> {
        let key = Self {
            version: KEY_FILE_VERSION,
            master_seed,
            f_hw: replication.f_hw,
            f_c: replication.f_c,
            h: latent_shape.0,
            w: latent_shape.1,
            c: latent_shape.2,
            kdf: KDF_NAME.into(),
            tiling: TILING_NAME.into(),
        };
        key.validate()?;
        Ok(key)
    }

    pub fn replication(&self) -> ReplicationConfig {
        ReplicationConfig { f_hw: self.f_hw, f_c: self.f_c }
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != KEY_FILE_VERSION {
            return Err(Error::Format(format!("unsupported key file version {}", self.version)));
        }
        if self.kdf != KDF_NAME {
            return Err(Error::Format(format!("unknown kdf {:?}", self.kdf)));
        }
        if self.tiling != TILING_NAME {
            return Err(Error::Format(format!("unknown tiling {:?}", self.tiling)));
        }
        if self.h != self.w {
            return Err(Error::UnsupportedShape(format!("latent must be square, got {}x{}", self.h, self.w)));
        }
        self.replication().payload_dims(self.latent_shape())?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let key: Self = serde_json::from_str(text).map_err(json_error)?;
        key.validate()?;
        Ok(key)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("key file serializes")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse { position: e.column(), message: format!("line {}: {e}", e.line()) }
}

/// Registry file: a JSON array of `{"user_id": u64, "master_seed": hex}`.
pub fn registry_from_json(text: &str) -> Result<UserRegistry> {
    let entries: Vec<UserEntry> = serde_json::from_str(text).map_err(json_error)?;
    UserRegistry::new(entries)
}

pub fn registry_to_json(registry: &UserRegistry) -> String {
    serde_json::to_string_pretty(registry.entries()).expect("registry serializes")
}

pub fn read_registry(path: impl AsRef<Path>) -> Result<UserRegistry> {
    registry_from_json(&fs::read_to_string(path)?)
}

pub fn write_registry(path: impl AsRef<Path>, registry: &UserRegistry) -> Result<()> {
    fs::write(path, registry_to_json(registry) + "\n")?;
    Ok(())
}
