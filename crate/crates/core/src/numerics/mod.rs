//! Dense tensors and a small reverse-mode differentiation engine.

mod graph;
mod tensor;

pub(crate) use graph::log_softmax_row;
pub use graph::{Activation, Gradients, Graph, Var};
pub use tensor::{project_linf, sign, Tensor};
pub(crate) use tensor::{project_linf_in_place, sign_of};
