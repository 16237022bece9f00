//! Reverse-mode automatic differentiation over dense `f64` arrays.

pub mod checkpoint;
mod gradcheck;
mod graph;
mod gumbel;
mod optim;
mod params;
mod suite;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use gumbel::{gumbel_noise, gumbel_softmax_st, gumbel_softmax_with_noise, SoftMask};
pub use optim::Adam;
pub use params::{glorot, uniform, ParamStore, Parameter};
pub use suite::primitive_suite;
pub use tensor::Tensor;
