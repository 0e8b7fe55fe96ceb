//! Dense 2-D tensors and a small reverse-mode tape.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_gradient, max_relative_error};
pub use tape::{Gradients, NodeId, Tape, Unary};
pub use tensor::{sigmoid, Tensor2};
