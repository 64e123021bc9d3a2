//! Reverse-mode automatic differentiation for small convolutional recurrent
//! networks on the CPU.
//!
//! Tensors are dense `f64`. A [`Graph`] records every op in execution order;
//! [`Graph::backward`] sweeps it in reverse. Parameters live in a
//! [`ParamStore`] and are bound into a graph per forward pass.

pub mod check;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use graph::{sigmoid, Gradients, Graph, Var};
pub use params::{Adam, ParamId, ParamStore};
pub use tensor::Tensor;
