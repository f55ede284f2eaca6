//! Fully connected tanh networks.
//!
//! Inputs are `(1, B, in)` matrices, one sample per row. Weights are stored as
//! `(1, in, out)` and biases as `(1, 1, out)` under `"{prefix}.w{l}"` and
//! `"{prefix}.b{l}"`. The final layer is linear.
//!
//! [`Mlp::vjp`] writes the backward pass of the network as ordinary forward
//! operations (affine maps and `1 - h²` factors). On a tape this makes the
//! input gradient a differentiable quantity, which is how parameter gradients
//! of `∇ₓV` are obtained.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::backend::Backend;
use crate::error::ParamError;
use crate::params::{Bound, ParamStore};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    prefix: String,
    sizes: Vec<usize>,
}

impl Mlp {
    /// `sizes` lists every layer width including input and output.
    pub fn new(prefix: impl Into<String>, sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        Self {
            prefix: prefix.into(),
            sizes,
        }
    }

    /// Input, `hidden` repeated `depth` times, then output.
    pub fn with_hidden(prefix: impl Into<String>, input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(prefix, sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn weight_name(&self, l: usize) -> String {
        format!("{}.w{l}", self.prefix)
    }

    pub fn bias_name(&self, l: usize) -> String {
        format!("{}.b{l}", self.prefix)
    }

    /// Adds Glorot-uniform weights and zero biases to `store`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<(), ParamError> {
        for l in 0..self.layers() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let w: Vec<f64> = (0..fi * fo).map(|_| dist.sample(rng)).collect();
            store.insert(self.weight_name(l), Tensor::new(Shape::new(1, fi, fo), w))?;
            store.insert(self.bias_name(l), Tensor::zeros(Shape::new(1, 1, fo)))?;
        }
        Ok(())
    }

    fn check_input<B: Backend>(&self, b: &B, x: &B::T) {
        let s = b.shape(x);
        assert!(
            s.batch == 1 && s.cols == self.sizes[0],
            "MLP input must be (1, B, {}), got {s}",
            self.sizes[0]
        );
    }

    /// Returns the output and the post-activation hidden states.
    pub fn forward_cached<B: Backend>(&self, b: &B, p: &Bound<B::T>, x: &B::T) -> (B::T, Vec<B::T>) {
        self.check_input(b, x);
        let mut hidden = Vec::with_capacity(self.layers() - 1);
        let mut h = x.clone();
        for l in 0..self.layers() {
            let a = b.matmul(&h, p.get(&self.weight_name(l)));
            let a = b.add(&a, p.get(&self.bias_name(l)));
            if l + 1 < self.layers() {
                h = b.tanh(&a);
                hidden.push(h.clone());
            } else {
                h = a;
            }
        }
        (h, hidden)
    }

    pub fn forward<B: Backend>(&self, b: &B, p: &Bound<B::T>, x: &B::T) -> B::T {
        self.forward_cached(b, p, x).0
    }

    /// Output together with the input cotangent `g_out · ∂out/∂x`, both as graph values.
    pub fn vjp<B: Backend>(&self, b: &B, p: &Bound<B::T>, x: &B::T, g_out: &B::T) -> (B::T, B::T) {
        let (out, hidden) = self.forward_cached(b, p, x);
        (out, self.pullback(b, p, &hidden, g_out))
    }

    /// Input cotangent for hidden states from [`Mlp::forward_cached`].
    pub fn pullback<B: Backend>(&self, b: &B, p: &Bound<B::T>, hidden: &[B::T], g_out: &B::T) -> B::T {
        let last = self.layers() - 1;
        let mut g = b.matmul_t(g_out, false, p.get(&self.weight_name(last)), true);
        for l in (0..last).rev() {
            let h = &hidden[l];
            let slope = b.add_scalar(&b.neg(&b.square(h)), 1.0);
            let ga = b.mul(&g, &slope);
            g = b.matmul_t(&ga, false, p.get(&self.weight_name(l)), true);
        }
        g
    }

    /// Per-row gradient of a scalar-output network: `(1, B, in)`.
    pub fn input_gradient<B: Backend>(&self, b: &B, p: &Bound<B::T>, x: &B::T) -> (B::T, B::T) {
        assert_eq!(self.output_dim(), 1, "input_gradient needs a scalar-output network");
        let rows = b.shape(x).rows;
        let ones = b.constant(Tensor::full(Shape::new(1, rows, 1), 1.0));
        self.vjp(b, p, x, &ones)
    }
}
