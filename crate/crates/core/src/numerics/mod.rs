//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod param;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamConfig};
pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{Backward, Graph, Var};
pub use kernels::RowMix;
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
