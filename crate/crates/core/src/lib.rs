//! Cartesian rigid-body mechanics: mass model, constraint topology, projected dynamics and integrators.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod integrators;
pub mod mechanics;
pub mod systems;
pub mod topology;

pub use dynamics::{DynamicsContext, Potential};
pub use error::{CoreError, Result};
pub use integrators::{Tolerances, Trajectory};
pub use mechanics::{assemble_mass_matrix, BodyKind, BodySpec, MassModel};
pub use systems::{Flavor, System, SystemConfig, SystemSpec};
pub use topology::{Constraint, Endpoint, JointTarget, SystemTopology};
