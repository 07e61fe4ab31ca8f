//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records operations eagerly; [`Graph::backward`] walks the
//! record in reverse to produce exact gradients for every node, including
//! inputs such as the trajectory code that refinement ascends on.

mod graph;
mod kernels;
mod optim;
mod tensor;

pub use graph::{sigmoid, Gradients, Graph, NodeId, LOGVAR_MAX, LOGVAR_MIN};
pub use kernels::ConvGeom;
pub use optim::Adam;
pub use tensor::Tensor;
