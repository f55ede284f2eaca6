//! Bodies, mass matrices and kinetic energy of Cartesian-embedded systems.
//!
//! A body of kind `ObjND` is represented by its center of mass plus `N`
//! points one unit along its principal axes. With the body's points stored as
//! columns of `X`, the rotation is recovered as `R = XΔ` with
//! `Δ = [−𝟙, I]ᵀ`, and the kinetic energy is `Tr(ẊMẊᵀ)/2` for a constant
//! block-diagonal `M`.
//!
//! Matrix states are flattened column-major: coordinate `k` of point `j`
//! lives at index `k + d·j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyKind {
    Obj0D,
    Obj1D,
    Obj2D,
    Obj3D,
}

impl BodyKind {
    /// Number of principal moments `N`.
    pub fn moments(self) -> usize {
        match self {
            BodyKind::Obj0D => 0,
            BodyKind::Obj1D => 1,
            BodyKind::Obj2D => 2,
            BodyKind::Obj3D => 3,
        }
    }

    pub fn points(self) -> usize {
        self.moments() + 1
    }

    pub fn from_moments(n: usize) -> Result<Self> {
        match n {
            0 => Ok(BodyKind::Obj0D),
            1 => Ok(BodyKind::Obj1D),
            2 => Ok(BodyKind::Obj2D),
            3 => Ok(BodyKind::Obj3D),
            _ => Err(CoreError::ParamDomain(format!("no body kind with {n} moments"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub kind: BodyKind,
    pub mass: f64,
    /// Principal second moments `λ` (length² units), one per axis point.
    pub moments: Vec<f64>,
    #[serde(default = "yes")]
    pub learn_mass: bool,
    #[serde(default = "yes")]
    pub learn_moments: bool,
}

fn yes() -> bool {
    true
}

impl BodySpec {
    pub fn point_mass(mass: f64) -> Self {
        Self {
            kind: BodyKind::Obj0D,
            mass,
            moments: Vec::new(),
            learn_mass: true,
            learn_moments: true,
        }
    }

    pub fn extended(mass: f64, moments: Vec<f64>) -> Result<Self> {
        let kind = BodyKind::from_moments(moments.len())?;
        let b = Self {
            kind,
            mass,
            moments,
            learn_mass: true,
            learn_moments: true,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(CoreError::ParamDomain(format!("mass must be positive, got {}", self.mass)));
        }
        if self.moments.len() != self.kind.moments() {
            return Err(CoreError::ParamDomain(format!(
                "{:?} needs {} moments, got {}",
                self.kind,
                self.kind.moments(),
                self.moments.len()
            )));
        }
        if let Some(l) = self.moments.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
            return Err(CoreError::ParamDomain(format!("moments must be positive, got {l}")));
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.kind.points()
    }

    /// Mass block `m[[1+Σλ, −λᵀ], [−λ, diag λ]]`.
    pub fn mass_block(&self) -> DMatrix<f64> {
        let n = self.points();
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = 1.0 + self.moments.iter().sum::<f64>();
        for (i, &l) in self.moments.iter().enumerate() {
            b[(0, i + 1)] = -l;
            b[(i + 1, 0)] = -l;
            b[(i + 1, i + 1)] = l;
        }
        b * self.mass
    }

    /// Closed-form inverse `m⁻¹(𝟙𝟙ᵀ + diag(0, 1/λ))`.
    pub fn inverse_mass_block(&self) -> DMatrix<f64> {
        let n = self.points();
        let mut b = DMatrix::from_element(n, n, 1.0);
        for (i, &l) in self.moments.iter().enumerate() {
            b[(i + 1, i + 1)] += 1.0 / l;
        }
        b / self.mass
    }
}

/// `Δ = [−𝟙, I]ᵀ`, of shape `(d+1) × d`.
pub fn delta_matrix(d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(CoreError::ParamDomain("delta matrix needs d >= 1".into()));
    }
    let mut m = DMatrix::zeros(d + 1, d);
    for j in 0..d {
        m[(0, j)] = -1.0;
        m[(j + 1, j)] = 1.0;
    }
    Ok(m)
}

/// Coefficients `c̃ = e₀ + Δc` that pick a body-frame point out of the body's columns.
pub fn body_point_coefficients(c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(1.0 - c.iter().sum::<f64>());
    out.extend_from_slice(c);
    out
}

/// Coefficients `Δu` of a body-frame direction.
pub fn body_axis_coefficients(u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push(-u.iter().sum::<f64>());
    out.extend_from_slice(u);
    out
}

/// World position `X c̃` of body-frame point `c`.
pub fn body_point_world(x_body: &DMatrix<f64>, c: &[f64]) -> Result<DVector<f64>> {
    if x_body.ncols() != c.len() + 1 {
        return Err(CoreError::Shape(format!(
            "body has {} points but c has length {}",
            x_body.ncols(),
            c.len()
        )));
    }
    Ok(x_body * DVector::from_vec(body_point_coefficients(c)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockInfo {
    pub start: usize,
    pub len: usize,
}

/// Block-diagonal mass matrix and its closed-form inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct MassModel {
    pub m: DMatrix<f64>,
    pub m_inv: DMatrix<f64>,
    pub blocks: Vec<BlockInfo>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ToMomentum,
    ToVelocity,
}

pub fn assemble_mass_matrix(bodies: &[BodySpec]) -> Result<MassModel> {
    let n: usize = bodies.iter().map(BodySpec::points).sum();
    let mut m = DMatrix::zeros(n, n);
    let mut m_inv = DMatrix::zeros(n, n);
    let mut blocks = Vec::with_capacity(bodies.len());
    let mut start = 0;
    for b in bodies {
        b.validate()?;
        let len = b.points();
        m.view_mut((start, start), (len, len)).copy_from(&b.mass_block());
        m_inv
            .view_mut((start, start), (len, len))
            .copy_from(&b.inverse_mass_block());
        blocks.push(BlockInfo { start, len });
        start += len;
    }
    Ok(MassModel { m, m_inv, blocks })
}

impl MassModel {
    pub fn points(&self) -> usize {
        self.m.nrows()
    }

    fn check(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.ncols() != self.points() {
            return Err(CoreError::Shape(format!(
                "matrix has {} columns, mass model has {} points",
                a.ncols(),
                self.points()
            )));
        }
        Ok(())
    }

    /// `P = ẊM` or `Ẋ = PM⁻¹`.
    pub fn convert(&self, a: &DMatrix<f64>, dir: Direction) -> Result<DMatrix<f64>> {
        self.check(a)?;
        Ok(match dir {
            Direction::ToMomentum => a * &self.m,
            Direction::ToVelocity => a * &self.m_inv,
        })
    }

    /// `Tr(ẊMẊᵀ)/2`.
    pub fn kinetic_energy(&self, xdot: &DMatrix<f64>) -> Result<f64> {
        self.check(xdot)?;
        Ok(0.5 * (xdot * &self.m * xdot.transpose()).trace())
    }

    /// `Tr(PM⁻¹Pᵀ)/2`.
    pub fn kinetic_energy_from_momentum(&self, p: &DMatrix<f64>) -> Result<f64> {
        self.check(p)?;
        Ok(0.5 * (p * &self.m_inv * p.transpose()).trace())
    }

    /// `M⁻¹ ⊗ I_d`: the action of `M⁻¹` on column-major flattened states.
    pub fn flat_inverse(&self, d: usize) -> DMatrix<f64> {
        kron_identity(&self.m_inv, d)
    }

    pub fn flat_mass(&self, d: usize) -> DMatrix<f64> {
        kron_identity(&self.m, d)
    }
}

/// `A ⊗ I_d`, matching the column-major flattening of `d × n` matrices.
pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(r * d, c * d);
    for i in 0..r {
        for j in 0..c {
            for k in 0..d {
                out[(k + d * i, k + d * j)] = a[(i, j)];
            }
        }
    }
    out
}

/// Column-major flattening of a `d × n` matrix.
pub fn flatten(x: &DMatrix<f64>) -> Vec<f64> {
    x.as_slice().to_vec()
}

pub fn unflatten(v: &[f64], d: usize) -> DMatrix<f64> {
    assert_eq!(v.len() % d, 0, "flat length {} not divisible by d = {d}", v.len());
    DMatrix::from_column_slice(d, v.len() / d, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_matrix_rows() {
        assert_eq!(delta_matrix(1).unwrap(), DMatrix::from_row_slice(2, 1, &[-1., 1.]));
        assert_eq!(
            delta_matrix(2).unwrap(),
            DMatrix::from_row_slice(3, 2, &[-1., -1., 1., 0., 0., 1.])
        );
        let d3 = delta_matrix(3).unwrap();
        assert_eq!(d3.shape(), (4, 3));
        for j in 0..3 {
            assert_eq!(d3.column(j).sum(), 0.0);
        }
        assert!(delta_matrix(0).is_err());
    }

    #[test]
    fn unit_obj3d_block() {
        let b = BodySpec::extended(1.0, vec![1.0, 1.0, 1.0]).unwrap();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[4., -1., -1., -1., -1., 1., 0., 0., -1., 0., 1., 0., -1., 0., 0., 1.],
        );
        assert_eq!(b.mass_block(), want);
        let inv = DMatrix::from_element(4, 4, 1.0) + DMatrix::from_diagonal(&DVector::from_vec(vec![0., 1., 1., 1.]));
        assert_eq!(b.inverse_mass_block(), inv);
        assert!((b.mass_block() * inv - DMatrix::identity(4, 4)).amax() < 1e-14);
    }

    #[test]
    fn point_masses_are_diagonal() {
        let mm = assemble_mass_matrix(&[BodySpec::point_mass(2.0), BodySpec::point_mass(3.0)]).unwrap();
        assert_eq!(mm.m, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(BodySpec::extended(0.0, vec![1.0]).is_err());
        assert!(BodySpec::extended(1.0, vec![1.0, -0.1]).is_err());
        assert!(assemble_mass_matrix(&[BodySpec::point_mass(-1.0)]).is_err());
    }

    #[test]
    fn kinetic_energy_of_point_mass() {
        let mm = assemble_mass_matrix(&[BodySpec::point_mass(2.0)]).unwrap();
        let v = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(mm.kinetic_energy(&v).unwrap(), 25.0);
        assert_eq!(mm.kinetic_energy(&DMatrix::zeros(2, 1)).unwrap(), 0.0);
        let p = mm.convert(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), Direction::ToMomentum).unwrap();
        assert_eq!(p.as_slice(), &[2.0, 0.0]);
        let z = mm.convert(&DMatrix::zeros(2, 1), Direction::ToVelocity).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn body_points() {
        let x = DMatrix::from_column_slice(3, 4, &[0., 0., 0., 2., 0., 0., 0., 3., 0., 0., 0., 4.]);
        assert_eq!(body_point_world(&x, &[0., 0., 0.]).unwrap().as_slice(), &[0., 0., 0.]);
        assert_eq!(body_point_world(&x, &[0., 1., 0.]).unwrap().as_slice(), &[0., 3., 0.]);
        assert_eq!(body_point_world(&x, &[0.5, 0., 0.]).unwrap().as_slice(), &[1., 0., 0.]);
        assert!(body_point_world(&x, &[0.5, 0.]).is_err());
    }

    #[test]
    fn kron_matches_flattening() {
        let mm = assemble_mass_matrix(&[BodySpec::extended(1.5, vec![0.2, 0.7]).unwrap()]).unwrap();
        let v = DMatrix::from_fn(2, 3, |i, j| (i + 3 * j) as f64 * 0.3 - 0.4);
        let p = mm.convert(&v, Direction::ToMomentum).unwrap();
        let flat = mm.flat_mass(2) * DVector::from_vec(flatten(&v));
        assert!((flat - DVector::from_vec(flatten(&p))).amax() < 1e-14);
    }
}
