//! Dense tensors, a reverse-mode tape, and the Adam optimizer.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, dropout_mask, l2_penalty, AdamConfig, AdamState};
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::{Scalar, Tensor};
