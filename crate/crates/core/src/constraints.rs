//! Constraint values `Φ`, velocity companions `Φ̇` and their Jacobians.
//!
//! All functions take column-major flattened positions `x` (and velocities or
//! momenta) of length `d·n` and return rows in topology order, joint and axis
//! rows in spatial order.

use cartmech_autodiff::{Shape, Tensor};
use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::mechanics::MassModel;
use crate::topology::{Row, RowTarget, SystemTopology};

fn check_len(topo: &SystemTopology, v: &[f64], what: &str) -> Result<()> {
    if v.len() != topo.dn() {
        return Err(CoreError::Shape(format!(
            "{what} has length {}, expected {}",
            v.len(),
            topo.dn()
        )));
    }
    Ok(())
}

/// `x_i − y` for a distance row, and the index of `y` when it is a point.
fn separation(d: usize, x: &[f64], i: usize, other: &RowTarget) -> (Vec<f64>, Option<usize>) {
    match other {
        RowTarget::Point(j) => ((0..d).map(|k| x[k + d * i] - x[k + d * j]).collect(), Some(*j)),
        RowTarget::Fixed(a) => ((0..d).map(|k| x[k + d * i] - a[k]).collect(), None),
    }
}

pub fn phi(topo: &SystemTopology, x: &[f64]) -> Result<DVector<f64>> {
    check_len(topo, x, "x")?;
    let d = topo.d;
    Ok(DVector::from_iterator(
        topo.c(),
        topo.rows().iter().map(|row| match row {
            Row::Distance { i, other, length_sq } => {
                let (r, _) = separation(d, x, *i, other);
                r.iter().map(|v| v * v).sum::<f64>() - length_sq
            }
            Row::Linear { k, terms, constant } => {
                terms.iter().map(|&(p, w)| w * x[k + d * p]).sum::<f64>() - constant
            }
        }),
    ))
}

pub fn jacobian_phi(topo: &SystemTopology, x: &[f64]) -> Result<DMatrix<f64>> {
    check_len(topo, x, "x")?;
    let d = topo.d;
    let mut j = DMatrix::zeros(topo.c(), topo.dn());
    for (r, row) in topo.rows().iter().enumerate() {
        match row {
            Row::Distance { i, other, .. } => {
                let (sep, pj) = separation(d, x, *i, other);
                for k in 0..d {
                    j[(r, k + d * i)] += 2.0 * sep[k];
                    if let Some(pj) = pj {
                        j[(r, k + d * pj)] -= 2.0 * sep[k];
                    }
                }
            }
            Row::Linear { k, terms, .. } => {
                for &(p, w) in terms {
                    j[(r, k + d * p)] += w;
                }
            }
        }
    }
    Ok(j)
}

/// `Φ̇ = DΦ(x)·ẋ`.
pub fn phidot(topo: &SystemTopology, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
    check_len(topo, v, "velocity")?;
    Ok(jacobian_phi(topo, x)? * DVector::from_column_slice(v))
}

/// `∂Φ̇/∂x` holding `ẋ` fixed. Zero for linear rows.
pub fn jacobian_phidot_x(topo: &SystemTopology, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    check_len(topo, x, "x")?;
    check_len(topo, v, "velocity")?;
    let d = topo.d;
    let mut j = DMatrix::zeros(topo.c(), topo.dn());
    for (r, row) in topo.rows().iter().enumerate() {
        if let Row::Distance { i, other, .. } = row {
            let pj = match other {
                RowTarget::Point(p) => Some(*p),
                RowTarget::Fixed(_) => None,
            };
            for k in 0..d {
                let dv = v[k + d * i] - pj.map_or(0.0, |p| v[k + d * p]);
                j[(r, k + d * i)] += 2.0 * dv;
                if let Some(p) = pj {
                    j[(r, k + d * p)] -= 2.0 * dv;
                }
            }
        }
    }
    Ok(j)
}

/// `Ψ = (Φ, Φ̇)` at a Hamiltonian state, with `ẋ = (M⁻¹ ⊗ I)p`.
pub fn psi(topo: &SystemTopology, mass: &MassModel, x: &[f64], p: &[f64]) -> Result<DVector<f64>> {
    check_len(topo, p, "momentum")?;
    let v = mass.flat_inverse(topo.d) * DVector::from_column_slice(p);
    let f = phi(topo, x)?;
    let fd = phidot(topo, x, v.as_slice())?;
    let mut out = DVector::zeros(2 * topo.c());
    out.rows_mut(0, topo.c()).copy_from(&f);
    out.rows_mut(topo.c(), topo.c()).copy_from(&fd);
    Ok(out)
}

/// `DΨ = [[DΦ, 0], [∂ₓΦ̇, DΦ·(M⁻¹ ⊗ I)]]`, shape `2C × 2dn`.
pub fn jacobian_psi(topo: &SystemTopology, mass: &MassModel, x: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
    check_len(topo, p, "momentum")?;
    let k = mass.flat_inverse(topo.d);
    let v = &k * DVector::from_column_slice(p);
    let dphi = jacobian_phi(topo, x)?;
    let dx = jacobian_phidot_x(topo, x, v.as_slice())?;
    let (c, dn) = (topo.c(), topo.dn());
    let mut j = DMatrix::zeros(2 * c, 2 * dn);
    j.view_mut((0, 0), (c, dn)).copy_from(&dphi);
    j.view_mut((c, 0), (c, dn)).copy_from(&dx);
    j.view_mut((c, dn), (c, dn)).copy_from(&(&dphi * &k));
    Ok(j)
}

/// Root-mean-square of `Φ(X_t)` over constraint components, one value per state.
pub fn violation_rmse<'a>(topo: &SystemTopology, positions: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let out: Vec<f64> = positions
        .into_iter()
        .map(|x| {
            let f = phi(topo, x)?;
            Ok(if f.is_empty() { 0.0 } else { (f.norm_squared() / f.len() as f64).sqrt() })
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(CoreError::Shape("violation_rmse of an empty trajectory".into()));
    }
    Ok(out)
}

/// Affine form of the constraint Jacobian: `vec(DΦ(x)) = x·G + c`, row-major over `(C, dn)`.
///
/// Every row is at most quadratic in `x`, so `G` holds the (constant,
/// symmetric) row Hessians and also gives `∂ₓΦ̇ = ẋ·G`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintLinearization {
    pub c_rows: usize,
    pub dn: usize,
    /// Shape `(1, dn, C·dn)`.
    pub g: Tensor,
    /// Shape `(1, 1, C·dn)`.
    pub c: Tensor,
}

impl ConstraintLinearization {
    pub fn new(topo: &SystemTopology) -> Result<Self> {
        let (c_rows, dn) = (topo.c(), topo.dn());
        let width = c_rows * dn;
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(width);
            for r in 0..c_rows {
                for col in 0..dn {
                    out.push(m[(r, col)]);
                }
            }
            out
        };
        let zero = vec![0.0; dn];
        let base = row_major(&jacobian_phi(topo, &zero)?);
        let mut g = Vec::with_capacity(dn * width);
        let mut e = zero.clone();
        for a in 0..dn {
            e[a] = 1.0;
            let probe = row_major(&jacobian_phi(topo, &e)?);
            g.extend(probe.iter().zip(&base).map(|(p, b)| p - b));
            e[a] = 0.0;
        }
        Ok(Self {
            c_rows,
            dn,
            g: Tensor::new(Shape::new(1, dn, width), g),
            c: Tensor::new(Shape::new(1, 1, width), base),
        })
    }
}
