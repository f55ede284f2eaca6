//! Ground-truth potentials on flattened positions.

use cartmech_autodiff::{Backend, Eager, Shape, Tape, Tensor};

use crate::dynamics::Potential;
use crate::error::{CoreError, Result};

/// `V = g Σ mᵢ x_{axis,i}` over mass-carrying points.
#[derive(Clone, Debug, PartialEq)]
pub struct Gravity {
    pub d: usize,
    pub axis: usize,
    pub g: f64,
    /// `(point, mass)` pairs.
    pub weights: Vec<(usize, f64)>,
}

impl Potential for Gravity {
    fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(self.g * self.weights.iter().map(|&(p, m)| m * x[self.axis + self.d * p]).sum::<f64>())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        for &(p, m) in &self.weights {
            out[self.axis + self.d * p] += self.g * m;
        }
        Ok(out)
    }
}

/// `V = Σ ½k(‖x_i − x_j‖ − ℓ₀)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Springs {
    pub d: usize,
    pub k: f64,
    pub rest: f64,
    pub pairs: Vec<(usize, usize)>,
}

impl Springs {
    fn separation(&self, x: &[f64], i: usize, j: usize) -> Vec<f64> {
        (0..self.d).map(|k| x[k + self.d * i] - x[k + self.d * j]).collect()
    }
}

impl Potential for Springs {
    fn energy(&self, x: &[f64]) -> Result<f64> {
        Ok(self
            .pairs
            .iter()
            .map(|&(i, j)| {
                let r = self.separation(x, i, j).iter().map(|v| v * v).sum::<f64>().sqrt();
                0.5 * self.k * (r - self.rest).powi(2)
            })
            .sum())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        for &(i, j) in &self.pairs {
            let sep = self.separation(x, i, j);
            let r = sep.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r < 1e-9 {
                return Err(CoreError::Singularity(format!("points {i} and {j} coincide")));
            }
            let f = self.k * (r - self.rest) / r;
            for k in 0..self.d {
                out[k + self.d * i] += f * sep[k];
                out[k + self.d * j] -= f * sep[k];
            }
        }
        Ok(out)
    }
}

/// Magnetic field of a dipole `m` at offset `r`: `(μ/‖r‖⁵)(3rrᵀ − ‖r‖²I)m`.
pub fn dipole_field(r: [f64; 3], m: [f64; 3], mu: f64) -> Result<[f64; 3]> {
    let s2: f64 = r.iter().map(|v| v * v).sum();
    if s2.sqrt() < MAGNET_SINGULARITY {
        return Err(CoreError::Singularity(format!("field evaluated at a dipole (|r| = {:e})", s2.sqrt())));
    }
    let s5 = s2 * s2 * s2.sqrt();
    let rm: f64 = r.iter().zip(&m).map(|(a, b)| a * b).sum();
    Ok([0, 1, 2].map(|k| mu * (3.0 * r[k] * rm - s2 * m[k]) / s5))
}

pub const MAGNET_SINGULARITY: f64 = 1e-6;

/// Pendulum bob (point `point`) carrying the dipole `−q x/‖x‖` in the field of fixed dipoles.
#[derive(Clone, Debug, PartialEq)]
pub struct Magnets {
    pub point: usize,
    pub strength: f64,
    pub mu: f64,
    pub positions: Vec<[f64; 3]>,
    pub moments: Vec<[f64; 3]>,
}

impl Magnets {
    fn bob(&self, x: &[f64]) -> Result<[f64; 3]> {
        let p = [0, 1, 2].map(|k| x[k + 3 * self.point]);
        if p.iter().map(|v| v * v).sum::<f64>().sqrt() < MAGNET_SINGULARITY {
            return Err(CoreError::Singularity("bob at the pivot".into()));
        }
        for r in &self.positions {
            let s: f64 = (0..3).map(|k| (p[k] - r[k]).powi(2)).sum::<f64>().sqrt();
            if s < MAGNET_SINGULARITY {
                return Err(CoreError::Singularity(format!("bob at magnet {r:?}")));
            }
        }
        Ok(p)
    }

    /// `−m₀(x)ᵀB(x)` written with backend operations; `x` is `(1, 1, 3)`.
    pub fn energy_on<B: Backend>(&self, b: &B, x: &B::T) -> B::T {
        let r2 = b.sum_last(&b.square(x));
        let m0 = b.scale(&b.div(x, &b.sqrt(&r2)), -self.strength);
        let mut field: Option<B::T> = None;
        for (pos, mom) in self.positions.iter().zip(&self.moments) {
            let r = b.sub(x, &b.constant(Tensor::row(pos.to_vec())));
            let m = b.constant(Tensor::row(mom.to_vec()));
            let s2 = b.sum_last(&b.square(&r));
            let s5 = b.mul(&b.square(&s2), &b.sqrt(&s2));
            let rm = b.dot_last(&r, &m);
            let num = b.sub(&b.scale(&b.mul(&r, &rm), 3.0), &b.mul(&s2, &m));
            let bi = b.scale(&b.div(&num, &s5), self.mu);
            field = Some(match field {
                None => bi,
                Some(f) => b.add(&f, &bi),
            });
        }
        match field {
            None => b.scalar(0.0),
            Some(f) => b.neg(&b.sum(&b.mul(&m0, &f))),
        }
    }
}

impl Potential for Magnets {
    fn energy(&self, x: &[f64]) -> Result<f64> {
        let p = self.bob(x)?;
        Ok(self.energy_on(&Eager, &Tensor::row(p.to_vec())).item())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.bob(x)?;
        let tape = Tape::new();
        let xv = tape.leaf(Tensor::new(Shape::new(1, 1, 3), p.to_vec()));
        let e = self.energy_on(&tape, &xv);
        let g = tape.backward(&e).map_err(|e| CoreError::Singularity(e.to_string()))?.wrt(xv).map_err(|e| CoreError::Singularity(e.to_string()))?;
        let mut out = vec![0.0; x.len()];
        out[3 * self.point..3 * self.point + 3].copy_from_slice(g.data());
        Ok(out)
    }
}

/// Sum of potentials.
pub struct Sum(pub Vec<Box<dyn Potential>>);

impl Potential for Sum {
    fn energy(&self, x: &[f64]) -> Result<f64> {
        self.0.iter().map(|p| p.energy(x)).sum()
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        for p in &self.0 {
            for (o, g) in out.iter_mut().zip(p.gradient(x)?) {
                *o += g;
            }
        }
        Ok(out)
    }
}

/// `V ≡ 0`.
pub struct Free;

impl Potential for Free {
    fn energy(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.len()])
    }
}
