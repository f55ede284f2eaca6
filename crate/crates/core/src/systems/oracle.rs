//! Generalized-coordinate equations of motion used as independent references.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{CoreError, Result};

/// Planar pendulum chain in joint angles measured from the downward vertical.
#[derive(Clone, Debug, PartialEq)]
pub struct PendulumOracle {
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub g: f64,
}

impl PendulumOracle {
    pub fn n(&self) -> usize {
        self.masses.len()
    }

    /// `Σ_{k ≥ i} m_k`.
    fn tail_mass(&self, i: usize) -> f64 {
        self.masses[i..].iter().sum()
    }

    /// `M_ij = cos(qᵢ − qⱼ) ℓᵢℓⱼ Σ_{k ≥ max(i,j)} m_k`.
    pub fn mass_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            (q[i] - q[j]).cos() * self.lengths[i] * self.lengths[j] * self.tail_mass(i.max(j))
        })
    }

    /// `∂M/∂q_k`.
    fn mass_matrix_derivative(&self, q: &[f64], k: usize) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let dij = (i == k) as i32 as f64 - (j == k) as i32 as f64;
            if dij == 0.0 {
                0.0
            } else {
                -(q[i] - q[j]).sin() * dij * self.lengths[i] * self.lengths[j] * self.tail_mass(i.max(j))
            }
        })
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        (0..self.n())
            .map(|k| -self.g * self.tail_mass(k) * self.lengths[k] * q[k].cos())
            .sum()
    }

    pub fn hamiltonian(&self, z: &[f64]) -> Result<f64> {
        let n = self.n();
        let (q, p) = z.split_at(n);
        let m = self.mass_matrix(q);
        let pv = DVector::from_column_slice(p);
        let qd = m.lu().solve(&pv).ok_or_else(|| CoreError::Config("singular pendulum mass matrix".into()))?;
        Ok(0.5 * pv.dot(&qd) + self.potential(q))
    }

    /// `(q̇, ṗ)` with `q̇ = M⁻¹p` and `ṗ = ½q̇ᵀ(∂M/∂q)q̇ − ∂V/∂q`.
    pub fn rhs(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let (q, p) = z.split_at(n);
        let qd = self
            .mass_matrix(q)
            .lu()
            .solve(&DVector::from_column_slice(p))
            .ok_or_else(|| CoreError::Config("singular pendulum mass matrix".into()))?;
        let mut out = qd.as_slice().to_vec();
        for k in 0..n {
            let dm = self.mass_matrix_derivative(q, k);
            let dv = self.g * self.tail_mass(k) * self.lengths[k] * q[k].sin();
            out.push(0.5 * qd.dot(&(dm * &qd)) - dv);
        }
        Ok(out)
    }

    /// Closed-form double-pendulum equations.
    pub fn closed_form_two(&self, z: &[f64]) -> Result<Vec<f64>> {
        if self.n() != 2 {
            return Err(CoreError::Config("closed form exists only for two links".into()));
        }
        let (m1, m2) = (self.masses[0], self.masses[1]);
        let (l1, l2) = (self.lengths[0], self.lengths[1]);
        let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
        let delta = q1 - q2;
        let (sd, cd) = delta.sin_cos();
        let den = m1 + m2 * sd * sd;
        let qd1 = (l2 * p1 - l1 * p2 * cd) / (l1 * l1 * l2 * den);
        let qd2 = (-m2 * l2 * p1 * cd + (m1 + m2) * l1 * p2) / (m2 * l1 * l2 * l2 * den);
        let c1 = p1 * p2 * sd / (l1 * l2 * den);
        let c2 = (m2 * l2 * l2 * p1 * p1 + (m1 + m2) * l1 * l1 * p2 * p2 - 2.0 * m2 * l1 * l2 * p1 * p2 * cd)
            * (2.0 * delta).sin()
            / (2.0 * l1 * l1 * l2 * l2 * den * den);
        let pd1 = -(m1 + m2) * self.g * l1 * q1.sin() - c1 + c2;
        let pd2 = -m2 * self.g * l2 * q2.sin() + c1 - c2;
        Ok(vec![qd1, qd2, pd1, pd2])
    }

    /// Cartesian positions and velocities, column-major `(x₀, y₀, x₁, y₁, …)`.
    pub fn embed(&self, q: &[f64], qd: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut x = Vec::with_capacity(2 * n);
        let mut v = Vec::with_capacity(2 * n);
        let (mut px, mut py, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..n {
            let (s, c) = q[k].sin_cos();
            let l = self.lengths[k];
            px += l * s;
            py -= l * c;
            vx += l * c * qd[k];
            vy += l * s * qd[k];
            x.extend([px, py]);
            v.extend([vx, vy]);
        }
        (x, v)
    }

    /// Joint angles and rates from Cartesian positions and velocities.
    pub fn angles(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut q = Vec::with_capacity(n);
        let mut qd = Vec::with_capacity(n);
        for k in 0..n {
            let (dx, dy, dvx, dvy) = if k == 0 {
                (x[0], x[1], v[0], v[1])
            } else {
                (
                    x[2 * k] - x[2 * k - 2],
                    x[2 * k + 1] - x[2 * k - 1],
                    v[2 * k] - v[2 * k - 2],
                    v[2 * k + 1] - v[2 * k - 1],
                )
            };
            let a = dx.atan2(-dy);
            let r = (dx * dx + dy * dy).sqrt();
            q.push(a);
            qd.push((dvx * a.cos() + dvy * a.sin()) / r);
        }
        (q, qd)
    }
}

/// `R = R_z(φ) R_x(θ) R_z(ψ)`.
pub fn euler_rotation(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let rz = |a: f64| {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    };
    let (s, c) = theta.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
    rz(phi) * rx * rz(psi)
}

/// Body-frame angular velocity map: `ω = A(θ, ψ)·(φ̇, θ̇, ψ̇)`.
pub fn euler_rate_matrix(theta: f64, psi: f64) -> Matrix3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(st * sp, cp, 0.0, st * cp, -sp, 0.0, ct, 0.0, 1.0)
}

fn euler_rate_matrix_dtheta(theta: f64, psi: f64) -> Matrix3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(ct * sp, 0.0, 0.0, ct * cp, 0.0, 0.0, -st, 0.0, 0.0)
}

fn euler_rate_matrix_dpsi(theta: f64, psi: f64) -> Matrix3<f64> {
    let st = theta.sin();
    let (sp, cp) = psi.sin_cos();
    Matrix3::new(st * cp, -sp, 0.0, -st * sp, -cp, 0.0, 0.0, 0.0, 0.0)
}

/// Heavy top in `ZXZ` Euler angles, pivot fixed at the origin, gravity along `−z`.
#[derive(Clone, Debug, PartialEq)]
pub struct EulerTopOracle {
    pub mass: f64,
    /// Principal second moments `λ` of the mass distribution.
    pub moments: [f64; 3],
    /// Body-frame pivot position relative to the center of mass.
    pub pivot: [f64; 3],
    pub g: f64,
}

impl EulerTopOracle {
    /// Inertia tensor about the pivot: `I_cm + m(‖c‖²I − ccᵀ)` with `I_cm = m(tr Σ − Σ)`.
    pub fn pivot_inertia(&self) -> Matrix3<f64> {
        let tr: f64 = self.moments.iter().sum();
        let icm = Matrix3::from_diagonal(&Vector3::from_iterator(self.moments.iter().map(|l| tr - l))) * self.mass;
        let c = Vector3::from(self.pivot);
        icm + (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * self.mass
    }

    fn check(&self, theta: f64) -> Result<()> {
        let s = theta.sin().abs();
        if s < 1e-6 {
            return Err(CoreError::GimbalLock(s));
        }
        Ok(())
    }

    pub fn mass_matrix(&self, q: &[f64]) -> Matrix3<f64> {
        let a = euler_rate_matrix(q[1], q[2]);
        a.transpose() * self.pivot_inertia() * a
    }

    /// Height of the center of mass: `−(R c)_z`.
    pub fn cm_height(&self, q: &[f64]) -> f64 {
        let (st, ct) = q[1].sin_cos();
        let (sp, cp) = q[2].sin_cos();
        let c = self.pivot;
        -(st * sp * c[0] + st * cp * c[1] + ct * c[2])
    }

    fn cm_height_grad(&self, q: &[f64]) -> [f64; 3] {
        let (st, ct) = q[1].sin_cos();
        let (sp, cp) = q[2].sin_cos();
        let c = self.pivot;
        [
            0.0,
            -(ct * sp * c[0] + ct * cp * c[1] - st * c[2]),
            -(st * cp * c[0] - st * sp * c[1]),
        ]
    }

    pub fn hamiltonian(&self, z: &[f64]) -> Result<f64> {
        self.check(z[1])?;
        let m = self.mass_matrix(&z[..3]);
        let p = Vector3::new(z[3], z[4], z[5]);
        let qd = m.lu().solve(&p).ok_or(CoreError::GimbalLock(z[1].sin().abs()))?;
        Ok(0.5 * p.dot(&qd) + self.mass * self.g * self.cm_height(&z[..3]))
    }

    pub fn rhs(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z[1])?;
        let q = &z[..3];
        let ip = self.pivot_inertia();
        let a = euler_rate_matrix(q[1], q[2]);
        let m = a.transpose() * ip * a;
        let p = Vector3::new(z[3], z[4], z[5]);
        let qd = m.lu().solve(&p).ok_or(CoreError::GimbalLock(q[1].sin().abs()))?;
        let dh = self.cm_height_grad(q);
        let dm = |da: Matrix3<f64>| da.transpose() * ip * a + a.transpose() * ip * da;
        let dm_theta = dm(euler_rate_matrix_dtheta(q[1], q[2]));
        let dm_psi = dm(euler_rate_matrix_dpsi(q[1], q[2]));
        let mg = self.mass * self.g;
        Ok(vec![
            qd[0],
            qd[1],
            qd[2],
            -mg * dh[0],
            0.5 * qd.dot(&(dm_theta * qd)) - mg * dh[1],
            0.5 * qd.dot(&(dm_psi * qd)) - mg * dh[2],
        ])
    }

    /// Cartesian `(X, Ẋ)` of the center of mass and the three unit axis points.
    pub fn embed(&self, q: &[f64], qd: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = euler_rotation(q[0], q[1], q[2]);
        let omega_body = euler_rate_matrix(q[1], q[2]) * Vector3::new(qd[0], qd[1], qd[2]);
        let omega = r * omega_body;
        let cm = -(r * Vector3::from(self.pivot));
        let mut x = Vec::with_capacity(12);
        let mut v = Vec::with_capacity(12);
        for i in 0..4 {
            let p = if i == 0 { cm } else { cm + r.column(i - 1) };
            x.extend(p.iter());
            v.extend(omega.cross(&p).iter());
        }
        (x, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_link_mass_matrix_at_rest() {
        let o = PendulumOracle { masses: vec![1.0, 1.0], lengths: vec![1.0, 1.0], g: 1.0 };
        assert_eq!(o.mass_matrix(&[0.0, 0.0]), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn embedding_examples() {
        let o = PendulumOracle { masses: vec![1.0, 1.0], lengths: vec![1.0, 1.0], g: 1.0 };
        let (x, v) = o.embed(&[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(x, vec![0.0, -1.0, 0.0, -2.0]);
        assert_eq!(v, vec![0.0; 4]);
        let one = PendulumOracle { masses: vec![1.0], lengths: vec![1.0], g: 1.0 };
        let (x, v) = one.embed(&[std::f64::consts::FRAC_PI_2], &[1.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(v[0].abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
        let (q, qd) = o.angles(&o.embed(&[0.4, -2.0], &[0.3, 0.7]).0, &o.embed(&[0.4, -2.0], &[0.3, 0.7]).1);
        assert!((q[0] - 0.4).abs() < 1e-14 && (q[1] + 2.0).abs() < 1e-14);
        assert!((qd[0] - 0.3).abs() < 1e-14 && (qd[1] - 0.7).abs() < 1e-14);
    }

    #[test]
    fn closed_form_agrees_with_generic() {
        let o = PendulumOracle { masses: vec![1.3, 0.7], lengths: vec![0.9, 1.4], g: 1.0 };
        for z in [[0.3, -1.2, 0.5, 0.1], [2.0, 2.5, -1.0, 0.7], [-3.0, 0.1, 0.0, 2.0]] {
            let a = o.rhs(&z).unwrap();
            let b = o.closed_form_two(&z).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn euler_rates_match_rotation_derivative() {
        let (q, qd) = ([0.4, 0.9, -1.3], [0.7, -0.2, 1.1]);
        let h = 1e-6;
        let r = euler_rotation(q[0], q[1], q[2]);
        let rp = euler_rotation(q[0] + h * qd[0], q[1] + h * qd[1], q[2] + h * qd[2]);
        let rm = euler_rotation(q[0] - h * qd[0], q[1] - h * qd[1], q[2] - h * qd[2]);
        let omega_hat = r.transpose() * (rp - rm) / (2.0 * h);
        let w = euler_rate_matrix(q[1], q[2]) * Vector3::from(qd);
        assert!((omega_hat[(2, 1)] - w[0]).abs() < 1e-8);
        assert!((omega_hat[(0, 2)] - w[1]).abs() < 1e-8);
        assert!((omega_hat[(1, 0)] - w[2]).abs() < 1e-8);
    }

    #[test]
    fn gimbal_lock_rejected() {
        let o = EulerTopOracle { mass: 1.0, moments: [0.05, 0.05, 0.09], pivot: [0.0, 0.0, -1.0], g: 1.0 };
        assert!(matches!(o.rhs(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]), Err(CoreError::GimbalLock(_))));
    }
}
