//! Learned constrained dynamics: models, training, datasets and evaluation.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod train;

pub use data::{DataConfig, Dataset, Split};
pub use error::{LearnError, Result};
pub use eval::{evaluate, Evaluation};
pub use loss::{trajectory_loss, Batch};
pub use model::{Model, ModelKind, ModelSpec, Prepared};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use train::{train, train_with, History, TrainConfig};
