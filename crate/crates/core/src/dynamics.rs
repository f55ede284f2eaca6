//! Unconstrained and constrained equations of motion.
//!
//! The flows are written once against [`Backend`] so that the same code
//! drives ground-truth simulation (eager tensors) and learned models (tape).
//! Batched states are `(B, 1, dn)` tensors. The explicit projection matrix is
//! built separately with nalgebra and serves as an independent check.

use std::sync::Arc;

use cartmech_autodiff::tensor::solve as lu_solve;
use cartmech_autodiff::{Backend, Eager, Shape, Tensor};
use nalgebra::{DMatrix, DVector};

use crate::constraints::{self, ConstraintLinearization};
use crate::error::{CoreError, Result};
use crate::mechanics::MassModel;
use crate::topology::SystemTopology;

/// Scalar potential `V(x)` on flattened positions.
pub trait Potential: Send + Sync {
    fn energy(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Constraint and mass data needed by the generic flows.
#[derive(Clone, Debug)]
pub struct FlowGeometry<T> {
    /// `(1, dn, C·dn)` row Hessians.
    pub g: T,
    /// `(1, 1, C·dn)` constant part of `DΦ`.
    pub c: T,
    /// `(1, dn, dn)` action of `M⁻¹` on flattened states.
    pub k: T,
    pub c_rows: usize,
    pub dn: usize,
}

impl<T> FlowGeometry<T> {
    pub fn from_parts<B: Backend<T = T>>(b: &B, lin: &ConstraintLinearization, k: T) -> Self {
        Self {
            g: b.constant(lin.g.clone()),
            c: b.constant(lin.c.clone()),
            k,
            c_rows: lin.c_rows,
            dn: lin.dn,
        }
    }
}

fn batch<B: Backend>(b: &B, x: &B::T, dn: usize) -> usize {
    let s = b.shape(x);
    assert!(s.rows == 1 && s.cols == dn, "expected (B, 1, {dn}) states, got {s}");
    s.batch
}

/// `DΦ(x)` as `(B, C, dn)`.
pub fn constraint_jacobian<B: Backend>(b: &B, geo: &FlowGeometry<B::T>, x: &B::T) -> B::T {
    let n = batch(b, x, geo.dn);
    let flat = b.add(&b.matmul(x, &geo.g), &geo.c);
    b.reshape(&flat, Shape::new(n, geo.c_rows, geo.dn))
}

/// `∂ₓΦ̇` at velocity `v`, as `(B, C, dn)`.
pub fn phidot_jacobian<B: Backend>(b: &B, geo: &FlowGeometry<B::T>, v: &B::T) -> B::T {
    let n = batch(b, v, geo.dn);
    b.reshape(&b.matmul(v, &geo.g), Shape::new(n, geo.c_rows, geo.dn))
}

/// `ż = P J∇H` for `H = pᵀKp/2 + V(x)`, given `∇V`.
///
/// Returns `(ẋ, ṗ)`. With `DΨ = [A | B]` split into position and momentum
/// columns, `S = DΨ J DΨᵀ = ABᵀ − BAᵀ` and the projected flow is
/// `ẋ = Kp − Bᵀμ`, `ṗ = −∇V + Aᵀμ` with `Sμ = DΨ J∇H`.
pub fn projected_hamiltonian_flow<B: Backend>(
    b: &B,
    geo: &FlowGeometry<B::T>,
    x: &B::T,
    p: &B::T,
    grad_v: &B::T,
) -> Result<(B::T, B::T)> {
    let n = batch(b, x, geo.dn);
    let v = b.matmul(p, &geo.k);
    let force = b.neg(grad_v);
    if geo.c_rows == 0 {
        return Ok((v, force));
    }
    let (c, dn) = (geo.c_rows, geo.dn);
    let dphi = constraint_jacobian(b, geo, x);
    let dphidot_x = phidot_jacobian(b, geo, &v);
    let dphidot_p = b.matmul(&dphi, &geo.k);
    let zeros = b.constant(Tensor::zeros(Shape::new(n, c, dn)));
    let a = b.concat(&[&dphi, &dphidot_x], 1);
    let bm = b.concat(&[&zeros, &dphidot_p], 1);
    let s = b.sub(&b.matmul_t(&a, false, &bm, true), &b.matmul_t(&bm, false, &a, true));
    let vcol = b.reshape(&v, Shape::new(n, dn, 1));
    let fcol = b.reshape(&force, Shape::new(n, dn, 1));
    let rhs = b.add(&b.matmul(&a, &vcol), &b.matmul(&bm, &fcol));
    let mu = b.solve(&s, &rhs)?;
    let dx = b.reshape(&b.matmul_t(&bm, true, &mu, false), Shape::new(n, 1, dn));
    let dp = b.reshape(&b.matmul_t(&a, true, &mu, false), Shape::new(n, 1, dn));
    Ok((b.sub(&v, &dx), b.add(&force, &dp)))
}

/// Constrained acceleration
/// `ẍ = M⁻¹f − M⁻¹DΦᵀ[DΦM⁻¹DΦᵀ]⁻¹(DΦM⁻¹f + ∂ₓΦ̇·ẋ)` with `f = −∇V`.
pub fn constrained_lagrangian_flow<B: Backend>(
    b: &B,
    geo: &FlowGeometry<B::T>,
    x: &B::T,
    v: &B::T,
    grad_v: &B::T,
) -> Result<B::T> {
    let n = batch(b, x, geo.dn);
    let a0 = b.neg(&b.matmul(grad_v, &geo.k));
    if geo.c_rows == 0 {
        return Ok(a0);
    }
    let dn = geo.dn;
    let dphi = constraint_jacobian(b, geo, x);
    let dphidot_x = phidot_jacobian(b, geo, v);
    let dk = b.matmul(&dphi, &geo.k);
    let s = b.matmul_t(&dk, false, &dphi, true);
    let a0col = b.reshape(&a0, Shape::new(n, dn, 1));
    let vcol = b.reshape(v, Shape::new(n, dn, 1));
    let rhs = b.add(&b.matmul(&dphi, &a0col), &b.matmul(&dphidot_x, &vcol));
    let mu = b.solve(&s, &rhs)?;
    let corr = b.reshape(&b.matmul_t(&dk, true, &mu, false), Shape::new(n, 1, dn));
    Ok(b.sub(&a0, &corr))
}

fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    Tensor::matrix(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec())
}

fn from_tensor(t: &Tensor) -> DMatrix<f64> {
    let s = t.shape();
    DMatrix::from_row_slice(s.rows, s.cols, t.data())
}

/// `J v` for `J = [[0, I], [−I, 0]]`.
pub fn apply_j(v: &[f64]) -> Vec<f64> {
    let h = v.len() / 2;
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[h..]);
    out.extend(v[..h].iter().map(|x| -x));
    out
}

pub fn symplectic_matrix(dim: usize) -> DMatrix<f64> {
    let h = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..h {
        j[(i, h + i)] = 1.0;
        j[(h + i, i)] = -1.0;
    }
    j
}

/// `I − J DΨᵀ (DΨ J DΨᵀ)⁻¹ DΨ`, solved with pivoted LU.
pub fn projection_matrix(dpsi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = dpsi.ncols();
    if dpsi.nrows() == 0 {
        return Ok(DMatrix::identity(dim, dim));
    }
    let j = symplectic_matrix(dim);
    let s = dpsi * &j * dpsi.transpose();
    let sol = lu_solve(&to_tensor(&s), &to_tensor(dpsi))?;
    Ok(DMatrix::identity(dim, dim) - &j * dpsi.transpose() * from_tensor(&sol))
}

/// Ground-truth dynamics of a constrained system with a known potential.
#[derive(Clone)]
pub struct DynamicsContext {
    pub topology: SystemTopology,
    pub mass: MassModel,
    pub potential: Arc<dyn Potential>,
    geometry: FlowGeometry<Tensor>,
    k_flat: DMatrix<f64>,
}

impl std::fmt::Debug for DynamicsContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicsContext")
            .field("topology", &self.topology)
            .field("mass", &self.mass)
            .finish_non_exhaustive()
    }
}

impl DynamicsContext {
    pub fn new(topology: SystemTopology, mass: MassModel, potential: Arc<dyn Potential>) -> Result<Self> {
        if mass.points() != topology.n() {
            return Err(CoreError::Shape(format!(
                "mass model has {} points, topology has {}",
                mass.points(),
                topology.n()
            )));
        }
        let lin = ConstraintLinearization::new(&topology)?;
        let k_flat = mass.flat_inverse(topology.d);
        let k = to_tensor(&k_flat);
        let geometry = FlowGeometry::from_parts(&Eager, &lin, k);
        Ok(Self {
            topology,
            mass,
            potential,
            geometry,
            k_flat,
        })
    }

    /// Rebuilds the cached constraint data after changing the enabled mask.
    pub fn with_mask(&self, mask: &[bool]) -> Result<Self> {
        let mut topo = self.topology.clone();
        topo.set_mask(mask)?;
        Self::new(topo, self.mass.clone(), self.potential.clone())
    }

    pub fn dn(&self) -> usize {
        self.topology.dn()
    }

    pub fn geometry(&self) -> &FlowGeometry<Tensor> {
        &self.geometry
    }

    fn split<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        let dn = self.dn();
        if z.len() != 2 * dn {
            return Err(CoreError::Shape(format!("state has length {}, expected {}", z.len(), 2 * dn)));
        }
        Ok(z.split_at(dn))
    }

    pub fn velocity_from_momentum(&self, p: &[f64]) -> Vec<f64> {
        (&self.k_flat * DVector::from_column_slice(p)).as_slice().to_vec()
    }

    pub fn momentum_from_velocity(&self, v: &[f64]) -> Vec<f64> {
        let m = self.mass.flat_mass(self.topology.d);
        (m * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `H = pᵀ(M⁻¹⊗I)p/2 + V(x)`.
    pub fn hamiltonian(&self, z: &[f64]) -> Result<f64> {
        let (x, p) = self.split(z)?;
        let pv = DVector::from_column_slice(p);
        Ok(0.5 * pv.dot(&(&self.k_flat * &pv)) + self.potential.energy(x)?)
    }

    /// Energy of a Lagrangian state `(x, ẋ)`.
    pub fn energy_from_velocity(&self, z: &[f64]) -> Result<f64> {
        let (x, v) = self.split(z)?;
        let m = self.mass.flat_mass(self.topology.d);
        let vv = DVector::from_column_slice(v);
        Ok(0.5 * vv.dot(&(m * &vv)) + self.potential.energy(x)?)
    }

    pub fn grad_hamiltonian(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (x, p) = self.split(z)?;
        let mut g = self.potential.gradient(x)?;
        g.extend(self.velocity_from_momentum(p));
        Ok(g)
    }

    /// `ż = J∇H`.
    pub fn unconstrained_dynamics(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(apply_j(&self.grad_hamiltonian(z)?))
    }

    pub fn jacobian_psi(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let (x, p) = self.split(z)?;
        constraints::jacobian_psi(&self.topology, &self.mass, x, p)
    }

    pub fn psi(&self, z: &[f64]) -> Result<DVector<f64>> {
        let (x, p) = self.split(z)?;
        constraints::psi(&self.topology, &self.mass, x, p)
    }

    /// `ż = P J∇H` via the generic flow.
    pub fn constrained_hamiltonian_dynamics(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (x, p) = self.split(z)?;
        let dn = self.dn();
        let row = |v: &[f64]| Tensor::new(Shape::new(1, 1, dn), v.to_vec());
        let gv = row(&self.potential.gradient(x)?);
        let (xd, pd) = projected_hamiltonian_flow(&Eager, &self.geometry, &row(x), &row(p), &gv)?;
        let mut out = xd.into_data();
        out.extend(pd.into_data());
        Ok(out)
    }

    /// `λ = −(DΨ J DΨᵀ)⁻¹ DΨ J∇H`.
    pub fn hamiltonian_multipliers(&self, z: &[f64]) -> Result<DVector<f64>> {
        let dpsi = self.jacobian_psi(z)?;
        if dpsi.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        let j = symplectic_matrix(dpsi.ncols());
        let s = &dpsi * &j * dpsi.transpose();
        let rhs = &dpsi * DVector::from_vec(apply_j(&self.grad_hamiltonian(z)?));
        let sol = lu_solve(&to_tensor(&s), &to_tensor(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice())))?;
        Ok(-DVector::from_column_slice(sol.data()))
    }

    /// `ż` reconstructed as `J[∇H + DΨᵀλ]`.
    pub fn multiplier_dynamics(&self, z: &[f64]) -> Result<Vec<f64>> {
        let lambda = self.hamiltonian_multipliers(z)?;
        let dpsi = self.jacobian_psi(z)?;
        let g = DVector::from_vec(self.grad_hamiltonian(z)?) + dpsi.transpose() * lambda;
        Ok(apply_j(g.as_slice()))
    }

    /// `ẍ` for the Lagrangian state `(x, ẋ)`.
    pub fn constrained_lagrangian_dynamics(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let dn = self.dn();
        let row = |v: &[f64]| Tensor::new(Shape::new(1, 1, dn), v.to_vec());
        let gv = row(&self.potential.gradient(x)?);
        Ok(constrained_lagrangian_flow(&Eager, &self.geometry, &row(x), &row(v), &gv)?.into_data())
    }

    /// `(ẋ, ẍ)` for a flat Lagrangian state.
    pub fn lagrangian_rhs(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (x, v) = self.split(z)?;
        let mut out = v.to_vec();
        out.extend(self.constrained_lagrangian_dynamics(x, v)?);
        Ok(out)
    }

    /// Converts a Lagrangian state `(x, ẋ)` into `(x, p)`.
    pub fn to_hamiltonian_state(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (x, v) = self.split(z)?;
        let mut out = x.to_vec();
        out.extend(self.momentum_from_velocity(v));
        Ok(out)
    }

    pub fn to_lagrangian_state(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (x, p) = self.split(z)?;
        let mut out = x.to_vec();
        out.extend(self.velocity_from_momentum(p));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::{assemble_mass_matrix, BodySpec};
    use crate::topology::{Constraint, Endpoint};

    struct Gravity;
    impl Potential for Gravity {
        fn energy(&self, x: &[f64]) -> Result<f64> {
            Ok(x[1])
        }
        fn gradient(&self, _x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0, 1.0])
        }
    }

    fn pendulum() -> DynamicsContext {
        let topo = SystemTopology::new(
            2,
            vec![BodySpec::point_mass(1.0)],
            vec![vec![0.0, 0.0]],
            vec![Constraint::Link { a: Endpoint::Point(0), b: Endpoint::Anchor(0), length: 1.0 }],
            1,
            1.0,
        )
        .unwrap();
        let mass = assemble_mass_matrix(&topo.bodies).unwrap();
        DynamicsContext::new(topo, mass, Arc::new(Gravity)).unwrap()
    }

    #[test]
    fn hanging_equilibrium_is_still() {
        let ctx = pendulum();
        let zd = ctx.constrained_hamiltonian_dynamics(&[0.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(zd.iter().all(|v| v.abs() < 1e-15));
        let lam = ctx.hamiltonian_multipliers(&[0.0, -1.0, 0.0, 0.0]).unwrap();
        // constraint force DΦᵀλ₁ = (0, -2λ₁) cancels ∇V = (0, 1)
        assert!((lam[0] - 0.5).abs() < 1e-14, "{lam}");
        let acc = ctx.constrained_lagrangian_dynamics(&[0.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!(acc.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn horizontal_pendulum_falls_freely() {
        let ctx = pendulum();
        let zd = ctx.constrained_hamiltonian_dynamics(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(zd[0].abs() < 1e-15 && zd[1].abs() < 1e-15 && zd[2].abs() < 1e-15);
        assert!((zd[3] + 1.0).abs() < 1e-15);
        let acc = ctx.constrained_lagrangian_dynamics(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(acc[0].abs() < 1e-15 && (acc[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_constraints_gives_identity_projection() {
        let p = projection_matrix(&DMatrix::zeros(0, 4)).unwrap();
        assert_eq!(p, DMatrix::identity(4, 4));
    }

    #[test]
    fn unconstrained_gravity() {
        let ctx = pendulum();
        let zd = ctx.unconstrained_dynamics(&[0.3, 0.2, 1.0, 0.0]).unwrap();
        assert_eq!(zd, vec![1.0, 0.0, 0.0, -1.0]);
    }
}
