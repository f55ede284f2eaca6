//! Batched dense tensors, a reverse-mode tape, and tanh MLPs whose input
//! gradients are emitted as ordinary graph operations so that parameter
//! gradients can see through them.

pub mod backend;
pub mod checkpoint;
pub mod error;
pub mod fd;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod tensor;

pub use backend::{Backend, Eager};
pub use error::{CheckpointError, ParamError, SolveError, TapeError};
pub use mlp::Mlp;
pub use params::{Bound, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::{Shape, Tensor};
