//! Serializable system descriptions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    /// Planar chain hanging from the origin.
    NPendulum { n: usize, masses: Vec<f64>, lengths: Vec<f64> },
    /// Spherical pendulums on anchors `(i+1)·spacing`, neighbours joined by springs of rest length `‖spacing‖`.
    CoupledPendulums {
        n: usize,
        k: f64,
        spacing: [f64; 3],
        masses: Vec<f64>,
        lengths: Vec<f64>,
    },
    /// Spherical pendulum carrying a dipole `−q x/‖x‖` above fixed dipoles.
    MagnetPendulum {
        mass: f64,
        length: f64,
        strength: f64,
        /// `μ₀/4π`.
        mu: f64,
        magnet_positions: Vec<[f64; 3]>,
        magnet_moments: Vec<[f64; 3]>,
    },
    /// Rigid body whose body-frame point `pivot` is pinned to the origin.
    Gyroscope { mass: f64, moments: [f64; 3], pivot: [f64; 3] },
    /// Free rigid body.
    Rotor { mass: f64, moments: [f64; 3] },
}

/// Initial-condition distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Std of pendulum-chain angular velocities.
    pub angular_velocity_std: f64,
    /// Upper bound of the polar angle (from hanging) for spherical pendulums.
    pub polar_max: f64,
    /// Std of spherical-pendulum velocities before tangent projection.
    pub velocity_std: f64,
    /// Upper bound of the gyroscope tilt.
    pub tilt_max: f64,
    pub spin_mean: f64,
    pub spin_std: f64,
    /// Std of rotor body angular velocity components.
    pub omega_std: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            angular_velocity_std: 0.5,
            polar_max: PI / 3.0,
            velocity_std: 0.2,
            tilt_max: 0.3,
            spin_mean: 20.0,
            spin_std: 2.0,
            omega_std: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub gravity: f64,
    pub spec: SystemSpec,
    #[serde(default)]
    pub sampling: SamplingConfig,
}

impl SystemConfig {
    pub fn n_pendulum(n: usize) -> Self {
        Self::with_spec(SystemSpec::NPendulum { n, masses: vec![1.0; n], lengths: vec![1.0; n] })
    }

    pub fn coupled_pendulums(n: usize) -> Self {
        Self::with_spec(SystemSpec::CoupledPendulums {
            n,
            k: 1.0,
            spacing: [1.0, 0.0, 0.0],
            masses: vec![1.0; n],
            lengths: vec![1.0; n],
        })
    }

    pub fn magnet_pendulum() -> Self {
        Self::with_spec(SystemSpec::MagnetPendulum {
            mass: 1.0,
            length: 1.0,
            strength: 1.0,
            mu: 1.0,
            magnet_positions: vec![[0.3, 0.0, -1.1], [-0.3, 0.0, -1.1]],
            magnet_moments: vec![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]],
        })
    }

    pub fn gyroscope() -> Self {
        Self::with_spec(SystemSpec::Gyroscope {
            mass: 1.0,
            moments: [0.05, 0.05, 0.09],
            pivot: [0.0, 0.0, -1.0],
        })
    }

    pub fn rotor() -> Self {
        Self::with_spec(SystemSpec::Rotor { mass: 1.0, moments: [0.03, 0.05, 0.09] })
    }

    fn with_spec(spec: SystemSpec) -> Self {
        Self { gravity: 1.0, spec, sampling: SamplingConfig::default() }
    }

    /// Default configuration for a system name (`npendulum`, `coupled`, `magnet`, `gyroscope`, `rotor`).
    pub fn by_name(name: &str, n: usize) -> Result<Self> {
        match name {
            "npendulum" | "n_pendulum" | "pendulum" => Ok(Self::n_pendulum(n)),
            "coupled" | "coupled_pendulums" => Ok(Self::coupled_pendulums(n)),
            "magnet" | "magnet_pendulum" => Ok(Self::magnet_pendulum()),
            "gyroscope" => Ok(Self::gyroscope()),
            "rotor" => Ok(Self::rotor()),
            other => Err(CoreError::Config(format!("unknown system `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.spec {
            SystemSpec::NPendulum { .. } => "n_pendulum",
            SystemSpec::CoupledPendulums { .. } => "coupled_pendulums",
            SystemSpec::MagnetPendulum { .. } => "magnet_pendulum",
            SystemSpec::Gyroscope { .. } => "gyroscope",
            SystemSpec::Rotor { .. } => "rotor",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CoreError::Config(format!("{what} must be positive, got {v}")))
            }
        };
        if !(self.gravity >= 0.0) {
            return Err(CoreError::Config(format!("gravity must be non-negative, got {}", self.gravity)));
        }
        match &self.spec {
            SystemSpec::NPendulum { n, masses, lengths } | SystemSpec::CoupledPendulums { n, masses, lengths, .. } => {
                if *n == 0 {
                    return Err(CoreError::Config("n must be at least 1".into()));
                }
                if masses.len() != *n || lengths.len() != *n {
                    return Err(CoreError::Config(format!("need {n} masses and lengths")));
                }
                masses.iter().try_for_each(|&m| positive(m, "mass"))?;
                lengths.iter().try_for_each(|&l| positive(l, "length"))?;
                if let SystemSpec::CoupledPendulums { k, spacing, .. } = &self.spec {
                    if !(*k >= 0.0) {
                        return Err(CoreError::Config(format!("spring constant must be non-negative, got {k}")));
                    }
                    positive(spacing.iter().map(|v| v * v).sum::<f64>().sqrt(), "spacing norm")?;
                }
            }
            SystemSpec::MagnetPendulum { mass, length, mu, magnet_positions, magnet_moments, .. } => {
                positive(*mass, "mass")?;
                positive(*length, "length")?;
                positive(*mu, "mu")?;
                if magnet_positions.len() != magnet_moments.len() {
                    return Err(CoreError::Config("one moment per magnet required".into()));
                }
            }
            SystemSpec::Gyroscope { mass, moments, .. } | SystemSpec::Rotor { mass, moments } => {
                positive(*mass, "mass")?;
                moments.iter().try_for_each(|&l| positive(l, "moment"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_unknown_keys() {
        for cfg in [
            SystemConfig::n_pendulum(2),
            SystemConfig::coupled_pendulums(3),
            SystemConfig::magnet_pendulum(),
            SystemConfig::gyroscope(),
            SystemConfig::rotor(),
        ] {
            let s = serde_json::to_string(&cfg).unwrap();
            let back: SystemConfig = serde_json::from_str(&s).unwrap();
            assert_eq!(back, cfg);
            cfg.validate().unwrap();
        }
        let bad = r#"{"gravity":1.0,"spec":{"type":"rotor","mass":1.0,"moments":[1,2,3],"extra":1}}"#;
        assert!(serde_json::from_str::<SystemConfig>(bad).is_err());
    }
}
