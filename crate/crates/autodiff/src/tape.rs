//! Reverse-mode recording tape.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward sweep simply walks it in reverse.
//! Backward produces plain tensors; higher-order derivatives are obtained by
//! writing the inner gradient as forward operations (see [`crate::mlp`]).

use std::cell::RefCell;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::backend::{sigmoid_value, softplus_value, sum_last_value, Backend};
use crate::error::{SolveError, TapeError};
use crate::tensor::{self, Shape, Tensor};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: usize,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul { a: usize, ta: bool, b: usize, tb: bool },
    Transpose(usize),
    Solve(usize, usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Sin(usize),
    Cos(usize),
    Sqrt(usize),
    Square(usize),
    Abs(usize),
    Softplus(usize),
    Sum(usize),
    SumLast(usize),
    Trace(usize),
    Reshape(usize),
    Concat { parts: Vec<usize>, axis: usize },
    Slice { src: usize, axis: usize, start: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    id: usize,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar with respect to the leaves of a tape.
pub struct Grads {
    tape: usize,
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Grads {
    /// The gradient for leaf `v`, or `None` if `v` does not influence the output.
    pub fn get(&self, v: Var) -> Result<Option<&Tensor>, TapeError> {
        if v.tape != self.tape {
            return Err(TapeError::Detached);
        }
        Ok(self.grads[v.idx].as_ref())
    }

    /// The gradient for `v`, zero-filled when `v` is unused.
    pub fn wrt(&self, v: Var) -> Result<Tensor, TapeError> {
        Ok(self
            .get(v)?
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.idx])))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, v: &Var) -> usize {
        assert_eq!(v.tape, self.id, "variable used on a tape it does not belong to");
        v.idx
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self.id,
            idx: nodes.len() - 1,
        }
    }

    fn unary(&self, a: &Var, f: impl Fn(&Tensor) -> Tensor, op: impl Fn(usize) -> Op) -> Var {
        let ia = self.check(a);
        let value = f(&self.nodes.borrow()[ia].value);
        self.push(value, op(ia))
    }

    fn binary(
        &self,
        a: &Var,
        b: &Var,
        f: impl Fn(&Tensor, &Tensor) -> Tensor,
        op: impl Fn(usize, usize) -> Op,
    ) -> Var {
        let (ia, ib) = (self.check(a), self.check(b));
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[ia].value, &nodes[ib].value)
        };
        self.push(value, op(ia, ib))
    }

    pub fn leaf(&self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: &Var) -> Result<Grads, TapeError> {
        if out.tape != self.id {
            return Err(TapeError::Detached);
        }
        let nodes = self.nodes.borrow();
        let out_shape = nodes[out.idx].value.shape();
        if out_shape.numel() != 1 {
            return Err(TapeError::NonScalar(out_shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[out.idx] = Some(Tensor::full(out_shape, 1.0));

        for i in (0..=out.idx).rev() {
            let node = &nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let val = |j: usize| &nodes[j].value;
            let mut acc = |j: usize, t: Tensor| match &mut grads[j] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    acc(*a, g.reduce_to(val(*a).shape()));
                    acc(*b, g.reduce_to(val(*b).shape()));
                }
                Op::Sub(a, b) => {
                    acc(*a, g.reduce_to(val(*a).shape()));
                    acc(*b, g.map(|x| -x).reduce_to(val(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_with(val(*b), |x, y| x * y).reduce_to(val(*a).shape());
                    let gb = g.zip_with(val(*a), |x, y| x * y).reduce_to(val(*b).shape());
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Div(a, b) => {
                    let ga = g.zip_with(val(*b), |x, y| x / y).reduce_to(val(*a).shape());
                    let gb = g
                        .zip_with(&node.value, |x, q| x * q)
                        .zip_with(val(*b), |x, y| -x / y)
                        .reduce_to(val(*b).shape());
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Neg(a) => acc(*a, g.map(|x| -x)),
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(*a, g.map(|x| x * s))
                }
                Op::AddScalar(a) => acc(*a, g),
                Op::MatMul { a, ta, b, tb } => {
                    let (av, bv) = (val(*a), val(*b));
                    let ga = if *ta {
                        tensor::matmul_t(bv, *tb, &g, true)
                    } else {
                        tensor::matmul_t(&g, false, bv, !*tb)
                    };
                    let gb = if *tb {
                        tensor::matmul_t(&g, true, av, *ta)
                    } else {
                        tensor::matmul_t(av, !*ta, &g, false)
                    };
                    acc(*a, ga.reduce_to(av.shape()));
                    acc(*b, gb.reduce_to(bv.shape()));
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::Solve(a, b) => {
                    let av = val(*a);
                    let gb = tensor::solve(&av.transpose(), &g)?;
                    let ga = tensor::matmul_t(&gb, false, &node.value, true).map(|x| -x);
                    acc(*a, ga.reduce_to(av.shape()));
                    acc(*b, gb.reduce_to(val(*b).shape()));
                }
                Op::Tanh(a) => acc(*a, g.zip_with(&node.value, |x, y| x * (1.0 - y * y))),
                Op::Exp(a) => acc(*a, g.zip_with(&node.value, |x, y| x * y)),
                Op::Ln(a) => acc(*a, g.zip_with(val(*a), |x, y| x / y)),
                Op::Sin(a) => acc(*a, g.zip_with(val(*a), |x, y| x * y.cos())),
                Op::Cos(a) => acc(*a, g.zip_with(val(*a), |x, y| -x * y.sin())),
                Op::Sqrt(a) => acc(*a, g.zip_with(&node.value, |x, y| 0.5 * x / y)),
                Op::Square(a) => acc(*a, g.zip_with(val(*a), |x, y| 2.0 * x * y)),
                Op::Abs(a) => acc(*a, g.zip_with(val(*a), |x, y| if y > 0.0 { x } else if y < 0.0 { -x } else { 0.0 })),
                Op::Softplus(a) => acc(*a, g.zip_with(val(*a), |x, y| x * sigmoid_value(y))),
                Op::Sum(a) => {
                    let s = val(*a).shape();
                    acc(*a, Tensor::full(s, g.item()))
                }
                Op::SumLast(a) => {
                    let s = val(*a).shape();
                    acc(*a, Tensor::zeros(s).zip_with(&g, |_, y| y))
                }
                Op::Trace(a) => {
                    let s = val(*a).shape();
                    let mut t = Tensor::zeros(s);
                    let n = s.rows;
                    let data = t.data_mut();
                    for bi in 0..s.batch {
                        for k in 0..n {
                            data[(bi * n + k) * n + k] = g.data()[bi];
                        }
                    }
                    acc(*a, t)
                }
                Op::Reshape(a) => {
                    let s = val(*a).shape();
                    acc(*a, g.reshape(s))
                }
                Op::Concat { parts, axis } => {
                    let mut start = 0;
                    for &p in parts {
                        let len = match axis {
                            0 => val(p).shape().batch,
                            1 => val(p).shape().rows,
                            _ => val(p).shape().cols,
                        };
                        acc(p, g.slice(*axis, start, len));
                        start += len;
                    }
                }
                Op::Slice { src, axis, start } => {
                    let mut t = Tensor::zeros(val(*src).shape());
                    t.slice_add_assign(*axis, *start, &g);
                    acc(*src, t)
                }
            }
        }
        Ok(Grads {
            tape: self.id,
            grads,
            shapes: nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

impl Backend for Tape {
    type T = Var;

    fn constant(&self, t: Tensor) -> Var {
        self.leaf(t)
    }
    fn value(&self, x: &Var) -> Tensor {
        let i = self.check(x);
        self.nodes.borrow()[i].value.clone()
    }
    fn shape(&self, x: &Var) -> Shape {
        let i = self.check(x);
        self.nodes.borrow()[i].value.shape()
    }
    fn add(&self, a: &Var, b: &Var) -> Var {
        self.binary(a, b, |x, y| x.zip_with(y, |p, q| p + q), Op::Add)
    }
    fn sub(&self, a: &Var, b: &Var) -> Var {
        self.binary(a, b, |x, y| x.zip_with(y, |p, q| p - q), Op::Sub)
    }
    fn mul(&self, a: &Var, b: &Var) -> Var {
        self.binary(a, b, |x, y| x.zip_with(y, |p, q| p * q), Op::Mul)
    }
    fn div(&self, a: &Var, b: &Var) -> Var {
        self.binary(a, b, |x, y| x.zip_with(y, |p, q| p / q), Op::Div)
    }
    fn neg(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(|v| -v), Op::Neg)
    }
    fn scale(&self, a: &Var, s: f64) -> Var {
        self.unary(a, |x| x.map(|v| v * s), |i| Op::Scale(i, s))
    }
    fn add_scalar(&self, a: &Var, s: f64) -> Var {
        self.unary(a, |x| x.map(|v| v + s), Op::AddScalar)
    }
    fn matmul_t(&self, a: &Var, ta: bool, b: &Var, tb: bool) -> Var {
        self.binary(
            a,
            b,
            |x, y| tensor::matmul_t(x, ta, y, tb),
            |a, b| Op::MatMul { a, ta, b, tb },
        )
    }
    fn transpose(&self, a: &Var) -> Var {
        self.unary(a, Tensor::transpose, Op::Transpose)
    }
    fn solve(&self, a: &Var, b: &Var) -> Result<Var, SolveError> {
        let (ia, ib) = (self.check(a), self.check(b));
        let value = {
            let nodes = self.nodes.borrow();
            tensor::solve(&nodes[ia].value, &nodes[ib].value)?
        };
        Ok(self.push(value, Op::Solve(ia, ib)))
    }
    fn tanh(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::tanh), Op::Tanh)
    }
    fn exp(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::exp), Op::Exp)
    }
    fn ln(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::ln), Op::Ln)
    }
    fn sin(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::sin), Op::Sin)
    }
    fn cos(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::cos), Op::Cos)
    }
    fn sqrt(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::sqrt), Op::Sqrt)
    }
    fn square(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(|v| v * v), Op::Square)
    }
    fn abs(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(f64::abs), Op::Abs)
    }
    fn softplus(&self, a: &Var) -> Var {
        self.unary(a, |x| x.map(softplus_value), Op::Softplus)
    }
    fn sum(&self, a: &Var) -> Var {
        self.unary(a, |x| Tensor::scalar(x.sum()), Op::Sum)
    }
    fn sum_last(&self, a: &Var) -> Var {
        self.unary(a, sum_last_value, Op::SumLast)
    }
    fn trace(&self, a: &Var) -> Var {
        self.unary(a, Tensor::trace, Op::Trace)
    }
    fn reshape(&self, a: &Var, shape: Shape) -> Var {
        self.unary(a, |x| x.clone().reshape(shape), Op::Reshape)
    }
    fn concat(&self, parts: &[&Var], axis: usize) -> Var {
        let idx: Vec<usize> = parts.iter().map(|p| self.check(p)).collect();
        let value = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Tensor> = idx.iter().map(|&i| &nodes[i].value).collect();
            Tensor::concat(&refs, axis)
        };
        self.push(value, Op::Concat { parts: idx, axis })
    }
    fn slice(&self, a: &Var, axis: usize, start: usize, len: usize) -> Var {
        self.unary(
            a,
            |x| x.slice(axis, start, len),
            |src| Op::Slice { src, axis, start },
        )
    }
}
