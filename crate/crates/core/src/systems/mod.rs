//! Benchmark systems: topology, potential, initial conditions and ground-truth rollouts.

pub mod config;
pub mod oracle;
pub mod potentials;
pub mod sampling;

use std::sync::Arc;

use rand::Rng;

use crate::dynamics::{DynamicsContext, Potential};
use crate::error::{CoreError, Result};
use crate::integrators::{integrate_adaptive, Tolerances, Trajectory};
use crate::mechanics::{assemble_mass_matrix, BodySpec};
use crate::topology::{Constraint, Endpoint, JointTarget, SystemTopology};

pub use config::{SamplingConfig, SystemConfig, SystemSpec};
use oracle::{EulerTopOracle, PendulumOracle};
use potentials::{Free, Gravity, Magnets, Springs, Sum};

/// Which conjugate variable a flat state carries next to the positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// `(x, p)` integrated with the projected Hamiltonian flow.
    Hamiltonian,
    /// `(x, ẋ)` integrated with the constrained Lagrangian acceleration.
    Lagrangian,
}

#[derive(Clone, Debug)]
pub struct System {
    pub config: SystemConfig,
    pub ctx: DynamicsContext,
}

fn gravity(d: usize, axis: usize, g: f64, weights: Vec<(usize, f64)>) -> Box<dyn Potential> {
    Box::new(Gravity { d, axis, g, weights })
}

impl System {
    pub fn build(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let g = config.gravity;
        let (topology, potential): (SystemTopology, Arc<dyn Potential>) = match &config.spec {
            SystemSpec::NPendulum { n, masses, lengths } => build_n_pendulum(*n, masses, lengths, g)?,
            SystemSpec::CoupledPendulums { n, k, spacing, masses, lengths } => {
                build_coupled_pendulums(*n, *k, *spacing, masses, lengths, g)?
            }
            SystemSpec::MagnetPendulum { mass, length, strength, mu, magnet_positions, magnet_moments } => {
                let topo = SystemTopology::new(
                    3,
                    vec![BodySpec::point_mass(*mass)],
                    vec![vec![0.0; 3]],
                    vec![Constraint::Link { a: Endpoint::Point(0), b: Endpoint::Anchor(0), length: *length }],
                    2,
                    g,
                )?;
                let pot = Sum(vec![
                    gravity(3, 2, g, vec![(0, *mass)]),
                    Box::new(Magnets {
                        point: 0,
                        strength: *strength,
                        mu: *mu,
                        positions: magnet_positions.clone(),
                        moments: magnet_moments.clone(),
                    }),
                ]);
                (topo, Arc::new(pot))
            }
            SystemSpec::Gyroscope { mass, moments, pivot } => {
                let topo = SystemTopology::new(
                    3,
                    vec![BodySpec::extended(*mass, moments.to_vec())?],
                    vec![vec![0.0; 3]],
                    vec![Constraint::Joint { a: 0, b: JointTarget::Anchor(0), ca: pivot.to_vec(), cb: vec![] }],
                    2,
                    g,
                )?;
                (topo, Arc::from(gravity(3, 2, g, vec![(0, *mass)])))
            }
            SystemSpec::Rotor { mass, moments } => {
                let topo = SystemTopology::new(
                    3,
                    vec![BodySpec::extended(*mass, moments.to_vec())?],
                    vec![],
                    vec![],
                    2,
                    g,
                )?;
                (topo, Arc::new(Free))
            }
        };
        let mass = assemble_mass_matrix(&topology.bodies)?;
        Ok(Self { config: config.clone(), ctx: DynamicsContext::new(topology, mass, potential)? })
    }

    pub fn name(&self) -> &'static str {
        self.config.name()
    }

    pub fn d(&self) -> usize {
        self.ctx.topology.d
    }

    pub fn n(&self) -> usize {
        self.ctx.topology.n()
    }

    pub fn dn(&self) -> usize {
        self.ctx.topology.dn()
    }

    /// Same system with a constraint-enable mask applied.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        Ok(Self { config: self.config.clone(), ctx: self.ctx.with_mask(mask)? })
    }

    /// Energy of a Lagrangian state `(x, ẋ)`.
    pub fn energy(&self, z: &[f64]) -> Result<f64> {
        self.ctx.energy_from_velocity(z)
    }

    /// On-manifold Lagrangian initial state `(x, ẋ)`.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<f64>> {
        sampling::sample(self, rng)
    }

    pub fn pendulum_oracle(&self) -> Option<PendulumOracle> {
        match &self.config.spec {
            SystemSpec::NPendulum { masses, lengths, .. } => Some(PendulumOracle {
                masses: masses.clone(),
                lengths: lengths.clone(),
                g: self.config.gravity,
            }),
            _ => None,
        }
    }

    pub fn top_oracle(&self) -> Option<EulerTopOracle> {
        match &self.config.spec {
            SystemSpec::Gyroscope { mass, moments, pivot } => Some(EulerTopOracle {
                mass: *mass,
                moments: *moments,
                pivot: *pivot,
                g: self.config.gravity,
            }),
            _ => None,
        }
    }

    /// Adaptive ground-truth rollout of a Lagrangian state. Returned states are `(x, ẋ)`.
    pub fn simulate(&self, z0: &[f64], times: &[f64], tol: &Tolerances, flavor: Flavor) -> Result<Trajectory> {
        match flavor {
            Flavor::Hamiltonian => {
                let h0 = self.ctx.to_hamiltonian_state(z0)?;
                let mut traj = integrate_adaptive(|_, z| self.ctx.constrained_hamiltonian_dynamics(z), &h0, times, tol)?;
                for s in &mut traj.states {
                    *s = self.ctx.to_lagrangian_state(s)?;
                }
                Ok(traj)
            }
            Flavor::Lagrangian => integrate_adaptive(|_, z| self.ctx.lagrangian_rhs(z), z0, times, tol),
        }
    }

    /// Angular-momentum tensor `L = X M Ẋᵀ − Ẋ M Xᵀ` of a Lagrangian state (row-major `d × d`).
    pub fn angular_momentum(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.d();
        let dn = self.dn();
        if z.len() != 2 * dn {
            return Err(CoreError::Shape("state length".into()));
        }
        let x = crate::mechanics::unflatten(&z[..dn], d);
        let v = crate::mechanics::unflatten(&z[dn..], d);
        let m = &self.ctx.mass.m;
        let l = &x * m * v.transpose() - &v * m * x.transpose();
        Ok(l.transpose().as_slice().to_vec())
    }
}

fn build_n_pendulum(n: usize, masses: &[f64], lengths: &[f64], g: f64) -> Result<(SystemTopology, Arc<dyn Potential>)> {
    let bodies = masses.iter().map(|&m| BodySpec::point_mass(m)).collect();
    let constraints = (0..n)
        .map(|i| Constraint::Link {
            a: Endpoint::Point(i),
            b: if i == 0 { Endpoint::Anchor(0) } else { Endpoint::Point(i - 1) },
            length: lengths[i],
        })
        .collect();
    let topo = SystemTopology::new(2, bodies, vec![vec![0.0, 0.0]], constraints, 1, g)?;
    let pot = gravity(2, 1, g, masses.iter().copied().enumerate().collect());
    Ok((topo, Arc::from(pot)))
}

fn build_coupled_pendulums(
    n: usize,
    k: f64,
    spacing: [f64; 3],
    masses: &[f64],
    lengths: &[f64],
    g: f64,
) -> Result<(SystemTopology, Arc<dyn Potential>)> {
    let bodies = masses.iter().map(|&m| BodySpec::point_mass(m)).collect();
    let anchors = (0..n).map(|i| spacing.iter().map(|s| (i + 1) as f64 * s).collect()).collect();
    let constraints = (0..n)
        .map(|i| Constraint::Link { a: Endpoint::Point(i), b: Endpoint::Anchor(i), length: lengths[i] })
        .collect();
    let topo = SystemTopology::new(3, bodies, anchors, constraints, 1, g)?;
    let rest = spacing.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pot = Sum(vec![
        gravity(3, 1, g, masses.iter().copied().enumerate().collect()),
        Box::new(Springs { d: 3, k, rest, pairs: (1..n).map(|i| (i - 1, i)).collect() }),
    ]);
    Ok((topo, Arc::new(pot)))
}
