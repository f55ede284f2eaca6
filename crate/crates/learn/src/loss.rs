//! Trajectory-chunk L1 loss.

use cartmech_autodiff::{Backend, Shape, Tensor};

use crate::data::Dataset;
use crate::error::{LearnError, Result};
use crate::model::{Model, Prepared};

/// Chunks arranged for a batched rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `(B, 1, 2dn)` initial states.
    pub initial: Tensor,
    /// One `(B, 1, 2dn)` target per step.
    pub targets: Vec<Tensor>,
    pub dt: f64,
}

impl Batch {
    pub fn from_dataset(data: &Dataset, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(LearnError::Data("empty minibatch".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
            return Err(LearnError::Data(format!("chunk {bad} out of range")));
        }
        let (b, dim) = (indices.len(), data.dim());
        let at = |t: usize| {
            let mut v = Vec::with_capacity(b * dim);
            indices.iter().for_each(|&i| v.extend_from_slice(data.state(i, t)));
            Tensor::new(Shape::new(b, 1, dim), v)
        };
        Ok(Self { initial: at(0), targets: (1..data.length()).map(at).collect(), dt: data.manifest.dt })
    }

    pub fn size(&self) -> usize {
        self.initial.shape().batch
    }

    pub fn steps(&self) -> usize {
        self.targets.len()
    }
}

/// `mean_batch (1/n) Σᵢ ‖ẑᵢ − zᵢ‖₁` over the `n` predicted steps.
pub fn trajectory_loss<B: Backend>(
    b: &B,
    model: &Model,
    pre: &Prepared<B::T>,
    batch: &Batch,
    substeps: usize,
) -> cartmech_core::Result<B::T> {
    let preds = model.rollout(b, pre, &batch.initial, batch.steps(), batch.dt, substeps)?;
    let mut total: Option<B::T> = None;
    for (p, t) in preds[1..].iter().zip(&batch.targets) {
        let l1 = b.sum(&b.abs(&b.sub(p, &b.constant(t.clone()))));
        total = Some(match total {
            None => l1,
            Some(acc) => b.add(&acc, &l1),
        });
    }
    let total = total.unwrap_or_else(|| b.scalar(0.0));
    Ok(b.scale(&total, 1.0 / (batch.steps() * batch.size()) as f64))
}
