//! Reverse-mode automatic differentiation over dense tensors.
//!
//! The op set covers what the forecasting networks need: matrix products,
//! elementwise arithmetic, bias broadcast, concatenation and slicing,
//! reductions, activations, layer normalization, dropout, causal dilated
//! convolution, linear upsampling and max pooling.

mod adam;
pub mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod param;
mod real;
pub mod selftest;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, relative_error, GradCheck};
pub use graph::{Graph, Mode, Var};
pub use param::{Gradients, ParamId, ParamStore};
pub use real::Real;
pub use tensor::Tensor;
