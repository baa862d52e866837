//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Every backward rule is written in terms of the same differentiable ops,
//! so gradients taken with `create_graph = true` can be differentiated
//! again. That is what a gradient-penalised critic needs: the penalty is a
//! function of an input gradient, and its own gradient flows back into the
//! critic weights.
//!
//! The op set is deliberately small. Convolutions are expressed as a sparse
//! im2col gather followed by a batched matrix product, so their adjoints
//! (transposed convolution, weight gradients) fall out of the same two ops.

mod conv;
mod sparse;
mod tensor;
mod var;

pub use conv::{conv2d, conv_transpose2d, ConvGeometry};
pub use sparse::SparseMap;
pub use tensor::Tensor;
pub use var::{grad, grad_seeded, no_grad, Var};
