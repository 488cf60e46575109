//! Dense tensors, a reverse-mode tape, Adam, and parameter checkpoints.

pub mod checkpoint;
mod graph;
pub mod kernels;
pub mod ops;
pub mod optim;
mod param;
mod real;
#[allow(clippy::module_inception)]
mod tensor;

pub use graph::{Graph, Grads, Var};
pub use ops::{affine, layer_norm, log_softmax, scaled_dot_attention, softmax};
pub use optim::{adam_step, adam_update, lr_at, AdamConfig, Schedule};
pub use param::{identity, truncated_normal, Param, ParamId, ParamStore};
pub use real::{Precision, Real};
pub use tensor::Tensor;
