//! Workbench configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversion::PositionGains;
use crate::dob::QFilterConfig;
use crate::robust::{DelayWeight, InertiaLoop, UncertaintyModel, WjForm};
use crate::sim::{AccelProfileParams, CircleParams, PlantPerturbation, ScenarioConfig};
use crate::vehicle::VehicleParams;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "ROTORFORCE_CONFIG";

/// The shipped default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.cfg");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    pub delay_max: f64,
    pub gain_max: f64,
    pub inertia_max: f64,
    pub delay_weight: DelayWeight,
    pub wj_form: WjForm,
    pub integral_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub duration: f64,
    pub seed: u64,
    pub accel_noise: f64,
    pub circle: CircleParams,
    pub accel_profile: AccelProfileParams,
    pub perturbation: PlantPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub vehicle: VehicleParams,
    pub position: PositionGains,
    pub q_filter: QFilterConfig,
    pub uncertainty: UncertaintySection,
    pub scenario: ScenarioSection,
    pub output: OutputSection,
}

impl WorkbenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Explicit path, else `$ROTORFORCE_CONFIG`, else the shipped defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Self::from_toml(DEFAULT_CONFIG),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: String| ConfigError::Invalid(e);
        self.scenario_template()
            .validate()
            .map_err(|e| inv(e.to_string()))?;
        self.uncertainty_model()
            .validate()
            .map_err(|e| inv(e.to_string()))?;
        let v = &self.vehicle;
        if v.inertia[0] != v.inertia[1]
            || v.gains.p[0] != v.gains.p[1]
            || v.gains.d[0] != v.gains.d[1]
        {
            return Err(inv("roll and pitch must share inertia and gains".into()));
        }
        Ok(())
    }

    pub fn uncertainty_model(&self) -> UncertaintyModel {
        let u = &self.uncertainty;
        UncertaintyModel {
            delay_max: u.delay_max,
            gain_max: u.gain_max,
            inertia_max: u.inertia_max,
            delay_weight: u.delay_weight,
            wj_form: u.wj_form,
            inertia_loop: InertiaLoop {
                nominal_inertia: self.vehicle.inertia[0],
                p: self.vehicle.gains.p[0],
                d: self.vehicle.gains.d[0],
                i: u.integral_gain,
            },
        }
    }

    /// Scenario with every field except trajectory, converter, observer
    /// switch and disturbance taken from the file.
    pub fn scenario_template(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            q_filter: self.q_filter,
            duration: s.duration,
            seed: s.seed,
            accel_noise: s.accel_noise,
            vehicle: self.vehicle,
            position_gains: self.position,
            circle: s.circle,
            accel_profile: s.accel_profile,
            perturbation: s.perturbation,
            ..Default::default()
        }
    }
}
