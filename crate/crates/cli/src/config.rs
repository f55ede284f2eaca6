//! Run configuration: one JSON document with `--set key.path=value` overrides.

use std::path::Path;

use cartmech_core::SystemConfig;
use cartmech_learn::{DataConfig, ModelKind, ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Rollout horizon in seconds.
    pub horizon: f64,
    /// Number of full test trajectories.
    pub n_test: usize,
    /// RK4 steps per data interval during evaluation rollouts.
    pub substeps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { horizon: 3.0, n_test: 100, substeps: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub data: DataConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::n_pendulum(2),
            data: DataConfig::default(),
            model: ModelSpec::new(ModelKind::Chnn, vec![256, 256, 256]),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (or the defaults when absent), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::User(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::User(format!("config {} is not valid JSON: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default()).expect("default config serializes"),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg = Self::from_value(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(doc: Value) -> Result<Self, CliError> {
        serde_path_to_error::deserialize(doc).map_err(|e| {
            let path = e.path().to_string();
            CliError::User(format!("invalid config at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system.validate()?;
        self.data.validate()?;
        self.train.validate()?;
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(CliError::User("model.hidden must list positive layer widths".into()));
        }
        if !(self.eval.horizon > 0.0) || self.eval.n_test == 0 || self.eval.substeps == 0 {
            return Err(CliError::User("eval.horizon, n_test and substeps must be positive".into()));
        }
        Ok(())
    }

    /// Evaluation horizon in data steps, capped by the stored trajectory length.
    pub fn horizon_steps(&self) -> usize {
        ((self.eval.horizon / self.data.dt).round() as usize).clamp(1, self.data.steps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets `a.b.c=value`; the value is parsed as JSON, falling back to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::User(format!("override `{assignment}` is not of the form key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::User(format!("override path `{path}` has an empty segment")));
    }
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| CliError::User(format!("override `{path}`: `{key}` indexes an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::User(format!("override `{path}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::User(format!("override `{path}`: `{key}` is not inside an object"))),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_value(serde_json::from_str(&cfg.to_json()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &["train.epochs=7".into(), "model.kind=\"node\"".into(), "model.hidden.1=32".into(), "system.gravity=2".into()],
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.model.kind, ModelKind::Node);
        assert_eq!(cfg.model.hidden, vec![256, 32, 256]);
        assert_eq!(cfg.system.gravity, 2.0);
        let bare = RunConfig::load(None, &["model.kind=hnn2d".into()]).unwrap();
        assert_eq!(bare.model.kind, ModelKind::Hnn2d);
    }

    #[test]
    fn unknown_keys_are_reported_with_their_path() {
        let err = RunConfig::load(None, &["train.epoch=3".into()]).unwrap_err().to_string();
        assert!(err.contains("train"), "{err}");
        let err = RunConfig::load(None, &["data.dt=\"fast\"".into()]).unwrap_err().to_string();
        assert!(err.contains("data.dt"), "{err}");
    }

    #[test]
    fn malformed_overrides_are_rejected() {
        assert!(RunConfig::load(None, &["train.epochs".into()]).is_err());
        assert!(RunConfig::load(None, &["train..epochs=1".into()]).is_err());
        assert!(RunConfig::load(None, &["train.epochs=0".into()]).is_err());
    }

    #[test]
    fn horizon_is_capped_by_the_data() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.horizon_steps(), 100);
        cfg.eval.horizon = 1.0;
        assert_eq!(cfg.horizon_steps(), 33);
        cfg.eval.horizon = 10.0;
        assert_eq!(cfg.horizon_steps(), 100);
    }
}
