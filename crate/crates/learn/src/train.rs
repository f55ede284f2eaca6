//! Minibatch training by backpropagation through fixed-step rollouts.

use std::fmt::Write as _;

use cartmech_autodiff::{Eager, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LearnError, Result};
use crate::loss::{trajectory_loss, Batch};
use crate::model::Model;
use crate::optim::{cosine_lr, AdamW, AdamWConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Seeds network initialization and minibatch shuffling.
    pub seed: u64,
    /// RK4 steps per data interval.
    pub substeps: usize,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Abort after this many consecutive non-finite steps.
    pub max_failures: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 200,
            lr: 3e-3,
            weight_decay: 1e-4,
            seed: 0,
            substeps: 1,
            checkpoint_every: 0,
            max_failures: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.substeps == 0 || self.max_failures == 0 {
            return Err(LearnError::Config(
                "train.epochs, batch_size, substeps and max_failures must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(LearnError::Config("train.lr must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig { weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the minibatches that produced a finite value.
    pub loss: f64,
    pub lr: f64,
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// `epoch,loss,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,lr\n");
        for r in &self.records {
            writeln!(out, "{},{},{}", r.epoch, r.loss, r.lr).expect("string write");
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Loss and parameter gradients (in store order) for one minibatch.
pub fn loss_and_grads(model: &Model, store: &ParamStore, batch: &Batch, substeps: usize) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let pre = model.prepare(&tape, store);
    let loss = trajectory_loss(&tape, model, &pre, batch, substeps)?;
    let value = cartmech_autodiff::Backend::value(&tape, &loss).item();
    let grads = tape.backward(&loss)?;
    Ok((value, pre.params.gradients(&grads)?))
}

/// Loss without gradients.
pub fn evaluate_loss(model: &Model, batch: &Batch, substeps: usize) -> Result<f64> {
    let pre = model.prepare(&Eager, &model.params);
    Ok(trajectory_loss(&Eager, model, &pre, batch, substeps)?.item())
}

pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig) -> Result<History> {
    train_with(model, data, cfg, |_, _| Ok(()))
}

/// Trains in place. `hook` runs after every epoch, e.g. to write checkpoints.
pub fn train_with(
    model: &mut Model,
    data: &Dataset,
    cfg: &TrainConfig,
    mut hook: impl FnMut(&EpochRecord, &Model) -> Result<()>,
) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::Data("empty training set".into()));
    }
    if data.dim() != 2 * model.dn() {
        return Err(LearnError::Data(format!(
            "dataset states have {} entries, model expects {}",
            data.dim(),
            2 * model.dn()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = AdamW::new(&model.params, cfg.optimizer());
    let frozen: Vec<String> = model.params.names().iter().filter(|n| !model.trainable(n)).cloned().collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    let mut consecutive = 0;
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let (mut sum, mut count, mut skipped) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::from_dataset(data, chunk)?;
            let outcome = loss_and_grads(model, &model.params, &batch, cfg.substeps);
            let ok = match outcome {
                Ok((loss, grads)) if loss.is_finite() && grads.iter().all(Tensor::is_finite) => {
                    opt.step(&mut model.params, &grads, lr, |n| !frozen.iter().any(|f| f == n))?;
                    sum += loss;
                    count += 1;
                    true
                }
                Ok((loss, _)) => {
                    log::warn!("epoch {epoch}: non-finite loss or gradient (loss = {loss}); step skipped");
                    false
                }
                Err(e) if e.is_numeric() => {
                    log::warn!("epoch {epoch}: {e}; step skipped");
                    false
                }
                Err(e) => return Err(e),
            };
            if ok {
                consecutive = 0;
            } else {
                skipped += 1;
                consecutive += 1;
                if consecutive >= cfg.max_failures {
                    return Err(LearnError::Diverged(consecutive));
                }
            }
        }
        let record = EpochRecord { epoch, loss: if count > 0 { sum / count as f64 } else { f64::NAN }, lr, skipped };
        log::debug!("epoch {epoch}: loss {:.6e} lr {lr:.3e}", record.loss);
        hook(&record, model)?;
        history.records.push(record);
    }
    Ok(history)
}
