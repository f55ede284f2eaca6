//! A common operator set shared by eager evaluation and the recording tape.
//!
//! Physics and model code is written once against [`Backend`] and runs either
//! on plain tensors ([`Eager`]) or on a [`Tape`](crate::Tape) that records the
//! computation for reverse-mode differentiation.

use crate::error::SolveError;
use crate::tensor::{self, Shape, Tensor};

pub trait Backend {
    type T: Clone;

    fn constant(&self, t: Tensor) -> Self::T;
    fn value(&self, x: &Self::T) -> Tensor;
    fn shape(&self, x: &Self::T) -> Shape;

    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn div(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn neg(&self, a: &Self::T) -> Self::T;
    fn scale(&self, a: &Self::T, s: f64) -> Self::T;
    fn add_scalar(&self, a: &Self::T, s: f64) -> Self::T;

    /// Batched `op(a) · op(b)`, `op` transposing the last two axes when the flag is set.
    fn matmul_t(&self, a: &Self::T, ta: bool, b: &Self::T, tb: bool) -> Self::T;
    fn transpose(&self, a: &Self::T) -> Self::T;
    fn solve(&self, a: &Self::T, b: &Self::T) -> Result<Self::T, SolveError>;

    fn tanh(&self, a: &Self::T) -> Self::T;
    fn exp(&self, a: &Self::T) -> Self::T;
    fn ln(&self, a: &Self::T) -> Self::T;
    fn sin(&self, a: &Self::T) -> Self::T;
    fn cos(&self, a: &Self::T) -> Self::T;
    fn sqrt(&self, a: &Self::T) -> Self::T;
    fn square(&self, a: &Self::T) -> Self::T;
    /// Subgradient 0 at the origin.
    fn abs(&self, a: &Self::T) -> Self::T;
    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(&self, a: &Self::T) -> Self::T;

    /// Sum of all entries, shape `(1, 1, 1)`.
    fn sum(&self, a: &Self::T) -> Self::T;
    /// Sum along the last axis, shape `(batch, rows, 1)`.
    fn sum_last(&self, a: &Self::T) -> Self::T;
    fn trace(&self, a: &Self::T) -> Self::T;
    fn reshape(&self, a: &Self::T, shape: Shape) -> Self::T;
    fn concat(&self, parts: &[&Self::T], axis: usize) -> Self::T;
    fn slice(&self, a: &Self::T, axis: usize, start: usize, len: usize) -> Self::T;

    fn matmul(&self, a: &Self::T, b: &Self::T) -> Self::T {
        self.matmul_t(a, false, b, false)
    }

    fn scalar(&self, v: f64) -> Self::T {
        self.constant(Tensor::scalar(v))
    }

    /// Row-wise inner product along the last axis.
    fn dot_last(&self, a: &Self::T, b: &Self::T) -> Self::T {
        let p = self.mul(a, b);
        self.sum_last(&p)
    }
}

/// Direct evaluation on tensors with no recording.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

pub(crate) fn softplus_value(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid_value(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Backend for Eager {
    type T = Tensor;

    fn constant(&self, t: Tensor) -> Tensor {
        t
    }
    fn value(&self, x: &Tensor) -> Tensor {
        x.clone()
    }
    fn shape(&self, x: &Tensor) -> Shape {
        x.shape()
    }
    fn add(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip_with(b, |x, y| x + y)
    }
    fn sub(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip_with(b, |x, y| x - y)
    }
    fn mul(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip_with(b, |x, y| x * y)
    }
    fn div(&self, a: &Tensor, b: &Tensor) -> Tensor {
        a.zip_with(b, |x, y| x / y)
    }
    fn neg(&self, a: &Tensor) -> Tensor {
        a.map(|x| -x)
    }
    fn scale(&self, a: &Tensor, s: f64) -> Tensor {
        a.map(|x| x * s)
    }
    fn add_scalar(&self, a: &Tensor, s: f64) -> Tensor {
        a.map(|x| x + s)
    }
    fn matmul_t(&self, a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
        tensor::matmul_t(a, ta, b, tb)
    }
    fn transpose(&self, a: &Tensor) -> Tensor {
        a.transpose()
    }
    fn solve(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, SolveError> {
        tensor::solve(a, b)
    }
    fn tanh(&self, a: &Tensor) -> Tensor {
        a.map(f64::tanh)
    }
    fn exp(&self, a: &Tensor) -> Tensor {
        a.map(f64::exp)
    }
    fn ln(&self, a: &Tensor) -> Tensor {
        a.map(f64::ln)
    }
    fn sin(&self, a: &Tensor) -> Tensor {
        a.map(f64::sin)
    }
    fn cos(&self, a: &Tensor) -> Tensor {
        a.map(f64::cos)
    }
    fn sqrt(&self, a: &Tensor) -> Tensor {
        a.map(f64::sqrt)
    }
    fn square(&self, a: &Tensor) -> Tensor {
        a.map(|x| x * x)
    }
    fn abs(&self, a: &Tensor) -> Tensor {
        a.map(f64::abs)
    }
    fn softplus(&self, a: &Tensor) -> Tensor {
        a.map(softplus_value)
    }
    fn sum(&self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.sum())
    }
    fn sum_last(&self, a: &Tensor) -> Tensor {
        sum_last_value(a)
    }
    fn trace(&self, a: &Tensor) -> Tensor {
        a.trace()
    }
    fn reshape(&self, a: &Tensor, shape: Shape) -> Tensor {
        a.clone().reshape(shape)
    }
    fn concat(&self, parts: &[&Tensor], axis: usize) -> Tensor {
        Tensor::concat(parts, axis)
    }
    fn slice(&self, a: &Tensor, axis: usize, start: usize, len: usize) -> Tensor {
        a.slice(axis, start, len)
    }
}

pub(crate) fn sum_last_value(a: &Tensor) -> Tensor {
    let s = a.shape();
    let data = a.data().chunks(s.cols.max(1)).map(|row| row.iter().sum()).collect::<Vec<f64>>();
    if s.cols == 0 {
        return Tensor::zeros(Shape::new(s.batch, s.rows, 1));
    }
    Tensor::new(Shape::new(s.batch, s.rows, 1), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus_value(1000.0), 1000.0);
        assert!(softplus_value(-1000.0) >= 0.0);
        assert!((softplus_value(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((sigmoid_value(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid_value(-800.0) >= 0.0 && sigmoid_value(800.0) <= 1.0);
    }

    #[test]
    fn dot_last_reduces_rows() {
        let b = Eager;
        let x = Tensor::matrix(2, 2, vec![1., 2., 3., 4.]);
        let y = b.dot_last(&x, &x);
        assert_eq!(y.shape(), Shape::new(1, 2, 1));
        assert_eq!(y.data(), &[5., 25.]);
    }
}
