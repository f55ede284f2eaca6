//! Initial conditions on the constraint manifold.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use super::config::SystemSpec;
use super::System;
use crate::error::{CoreError, Result};

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| CoreError::Config(format!("normal({mean}, {std}): {e}")))
}

fn uniform(lo: f64, hi: f64) -> Result<Uniform<f64>> {
    Uniform::new(lo, hi).map_err(|e| CoreError::Config(format!("uniform({lo}, {hi}): {e}")))
}

/// Sample a Lagrangian state `(x, ẋ)` for any benchmark system.
pub fn sample(system: &System, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let s = &system.config.sampling;
    let mut z = match &system.config.spec {
        SystemSpec::NPendulum { n, .. } => {
            let oracle = system.pendulum_oracle().expect("pendulum oracle");
            let angle = uniform(-PI, PI)?;
            let rate = normal(0.0, s.angular_velocity_std)?;
            let q: Vec<f64> = (0..*n).map(|_| angle.sample(rng)).collect();
            let qd: Vec<f64> = (0..*n).map(|_| rate.sample(rng)).collect();
            let (x, v) = oracle.embed(&q, &qd);
            [x, v].concat()
        }
        SystemSpec::CoupledPendulums { n, spacing, lengths, .. } => {
            let mut x = Vec::with_capacity(3 * n);
            let mut v = Vec::with_capacity(3 * n);
            for i in 0..*n {
                let anchor = Vector3::from(*spacing) * (i + 1) as f64;
                let (dir, vel) = spherical(rng, s.polar_max, s.velocity_std, 1)?;
                x.extend((anchor + dir * lengths[i]).iter());
                v.extend(vel.iter());
            }
            [x, v].concat()
        }
        SystemSpec::MagnetPendulum { length, .. } => {
            let (dir, vel) = spherical(rng, s.polar_max, s.velocity_std, 2)?;
            [(dir * *length).as_slice(), vel.as_slice()].concat()
        }
        SystemSpec::Gyroscope { .. } => {
            let oracle = system.top_oracle().expect("top oracle");
            let turn = uniform(0.0, 2.0 * PI)?;
            let q = [turn.sample(rng), uniform(0.0, s.tilt_max)?.sample(rng), turn.sample(rng)];
            let qd = [0.0, 0.0, normal(s.spin_mean, s.spin_std)?.sample(rng)];
            let (x, v) = oracle.embed(&q, &qd);
            [x, v].concat()
        }
        SystemSpec::Rotor { .. } => {
            let w = Quaternion::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let r = *UnitQuaternion::from_quaternion(w).to_rotation_matrix().matrix();
            let om = normal(0.0, s.omega_std)?;
            let omega = Vector3::new(om.sample(rng), om.sample(rng), om.sample(rng));
            rigid_state(&r, &omega)
        }
    };
    for v in z.iter_mut() {
        if v.abs() < 1e-300 {
            *v = 0.0;
        }
    }
    Ok(z)
}

/// Unit direction within `polar_max` of straight down (along `−e_axis`) and a tangent velocity.
fn spherical(rng: &mut impl Rng, polar_max: f64, velocity_std: f64, axis: usize) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let polar = uniform(0.0, polar_max)?.sample(rng);
    let azimuth = uniform(0.0, 2.0 * PI)?.sample(rng);
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut dir = Vector3::zeros();
    dir[axis] = -polar.cos();
    dir[a] = polar.sin() * azimuth.cos();
    dir[b] = polar.sin() * azimuth.sin();
    let nv = normal(0.0, velocity_std)?;
    let raw = Vector3::new(nv.sample(rng), nv.sample(rng), nv.sample(rng));
    let vel = raw - dir * dir.dot(&raw);
    Ok((dir, vel))
}

/// Free rigid body with its center of mass at the origin, orientation `r` and body rate `omega_body`.
pub fn rigid_state(r: &Matrix3<f64>, omega_body: &Vector3<f64>) -> Vec<f64> {
    let omega = r * omega_body;
    let mut x = vec![0.0; 3];
    let mut v = vec![0.0; 3];
    for i in 0..3 {
        let p = r.column(i).into_owned();
        x.extend(p.iter());
        v.extend(omega.cross(&p).iter());
    }
    [x, v].concat()
}

/// Rotor spinning at `rate` about its intermediate principal axis with a small transverse perturbation.
pub fn intermediate_axis_spin(rate: f64, perturbation: f64) -> Vec<f64> {
    rigid_state(&Matrix3::identity(), &Vector3::new(perturbation, rate, perturbation))
}

/// Body-frame angular velocity of a free rigid-body Lagrangian state.
pub fn body_angular_velocity(z: &[f64]) -> Vector3<f64> {
    let r = Matrix3::from_column_slice(&z[3..12]);
    let rdot = Matrix3::from_column_slice(&z[15..24]);
    let w = r.transpose() * rdot;
    Vector3::new(0.5 * (w[(2, 1)] - w[(1, 2)]), 0.5 * (w[(0, 2)] - w[(2, 0)]), 0.5 * (w[(1, 0)] - w[(0, 1)]))
}
