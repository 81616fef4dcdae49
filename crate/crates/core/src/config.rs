//! One TOML document holding every pipeline knob. Missing keys take their
//! defaults; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::DetectorConfig;
use crate::ensemble::WindowConfig;
use crate::evalkit::ExperimentConfig;
use crate::phases::PhaseConfig;
use crate::rules::MiningConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Master seed; overrides the detector seed when set.
    pub seed: Option<u64>,
    pub phases: PhaseConfig,
    pub mining: MiningConfig,
    pub detectors: DetectorConfig,
    pub window: WindowConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text)?;
        if let Some(seed) = cfg.seed {
            cfg.detectors.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mining
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.window
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let d = &self.detectors;
        if d.features.is_empty() {
            return Err(ConfigError::Invalid("detectors.features is empty".into()));
        }
        if !(d.ocsvm_nu > 0.0 && d.ocsvm_nu <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "detectors.ocsvm_nu must be in (0, 1], got {}",
                d.ocsvm_nu
            )));
        }
        if d.max_train == 0 {
            return Err(ConfigError::Invalid("detectors.max_train must be positive".into()));
        }
        if !(self.phases.alt_tol_m >= 0.0 && self.phases.pos_tol_m >= 0.0) {
            return Err(ConfigError::Invalid("phase tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(Config::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_and_unknown_keys() {
        let cfg = Config::from_toml("seed = 7\n[window]\nwindow_len = 20\n").unwrap();
        assert_eq!(cfg.window.window_len, 20);
        assert_eq!(cfg.window.sustained_run, 3);
        assert_eq!(cfg.detectors.seed, 7);
        assert!(Config::from_toml("[window]\nbogus = 1\n").is_err());
        assert!(Config::from_toml("[detectors]\nocsvm_nu = 0.0\n").is_err());
    }
}
