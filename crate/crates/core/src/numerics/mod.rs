//! Dense tensors and a small reverse-mode differentiation tape.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{log_softmax, softmax_rows, Gradients, Graph, Var};
pub use tensor::Tensor;
