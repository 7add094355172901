//! Run-wide configuration file (TOML). Every section is optional and falls
//! back to the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{FollowerParams, ReleaseParams};
use crate::mating::FsmParams;
use crate::scenario::EngineSettings;
use crate::world::WorldParams;

/// Environment variable naming a configuration file.
pub const CONFIG_ENV: &str = "MICROFORGE_CONFIG";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroforgeConfig {
    pub world: WorldParams,
    pub fsm: FsmParams,
    pub follower: FollowerParams,
    pub release: ReleaseParams,
}

impl MicroforgeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: "<string>".into(), message: e.to_string() })?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: shown.clone(), message: e.to_string() })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: shown, message },
            other => other,
        })
    }

    /// Load from `explicit` if given, else from `$MICROFORGE_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        let env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(env) {
            Some(p) => Self::from_file(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world.validate().map_err(ConfigError::Invalid)?;
        let f = &self.follower;
        if !(f.gain > 0.0 && f.axis_tol_um > 0.0 && f.max_step_um > 0.0) {
            return Err(ConfigError::Invalid("follower gain, tolerance and step must be positive".into()));
        }
        if !(self.release.duration_s >= 0.0 && self.release.contact_tol_um >= 0.0) {
            return Err(ConfigError::Invalid("release duration and contact tolerance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            world: self.world.clone(),
            fsm: self.fsm.clone(),
            follower: self.follower.clone(),
            release: self.release.clone(),
        }
    }
}
