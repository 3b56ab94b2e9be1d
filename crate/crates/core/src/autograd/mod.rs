//! Minimal reverse-mode autodiff for the NCHW convolutional layers the network
//! needs. Convolutions lower to im2col + GEMM on `matrixmultiply`.

mod graph;
mod optim;
mod tensor;

pub use graph::{Graph, ParamGrads, Var};
pub use optim::Adam;
pub use tensor::{Scalar, Tensor};
