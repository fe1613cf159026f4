//! The single configuration file that drives runs, batches and tuning.
//!
//! Every section is optional and falls back to the defaults; unknown keys
//! are rejected. The config hash is the SHA-256 of the canonical JSON form
//! of the fully resolved config, so formatting, key order and omitted
//! defaults do not change it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::BaselineParams;
use crate::decision::ControllerSetup;
use crate::error::ConfigError;
use crate::metrics::MetricsParams;
use crate::mpc::MpcSettings;
use crate::scenario::{ControllerParams, ScenarioGeometry};
use crate::sim::{BatchGrid, ScriptParams, SimConfig};
use crate::tuning::TuningConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: ScenarioGeometry,
    pub controller: ControllerParams,
    pub mpc: MpcSettings,
    pub baseline: BaselineParams,
    pub sim: SimConfig,
    pub script: ScriptParams,
    pub batch: BatchGrid,
    pub metrics: MetricsParams,
    pub tuning: TuningConfig,
}

fn parse_error(e: toml::de::Error) -> ConfigError {
    ConfigError::Parse(e.to_string().trim_end().to_owned())
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.validate()?;
        self.controller.validate()?;
        self.baseline.validate(&self.controller)?;
        self.sim.validate()?;
        self.sim.cadence(self.controller.dt).map_err(|_| {
            ConfigError::invalid("sim.dt_sim", "controller.dt must be an integer multiple of sim.dt_sim")
        })?;
        self.script.validate(&self.geometry)?;
        self.metrics.validate()?;
        self.tuning.validate()?;
        validate_mpc(&self.mpc)?;
        if self.batch.seeds.is_empty() {
            return Err(ConfigError::invalid("batch.seeds", "must not be empty"));
        }
        Ok(())
    }

    pub fn controller_setup(&self) -> ControllerSetup {
        ControllerSetup {
            params: self.controller.clone(),
            geometry: self.geometry.clone(),
            mpc: self.mpc.clone(),
            baseline: self.baseline.clone(),
            metrics: self.metrics.clone(),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = canonical_json(&value);
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_mpc(m: &MpcSettings) -> Result<(), ConfigError> {
    for (name, v) in [
        ("mpc.eps_safe", m.eps_safe),
        ("mpc.fd_step", m.fd_step),
        ("mpc.tol", m.tol),
        ("mpc.v_eps", m.v_eps),
        ("mpc.sensing_range", m.sensing_range),
        ("mpc.standstill_speed", m.standstill_speed),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::invalid(name, "must be finite and > 0"));
        }
    }
    if m.max_iters == 0 {
        return Err(ConfigError::invalid("mpc.max_iters", "must be >= 1"));
    }
    Ok(())
}

/// JSON with object keys sorted at every level and no whitespace.
pub fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}
