//! A small reverse-mode automatic differentiation engine over dense tensors.
//!
//! Every op records a backward rule when at least one input tracks
//! gradients; [`Tensor::backward`] walks the graph in reverse topological
//! order. The op set is deliberately narrow: exactly what the shading
//! networks, the formation equations and the losses need.
//!
//! Tensors are generic over [`Real`]: models train in `f32`, gradient checks
//! run in `f64`.

mod checkpoint;
mod gradcheck;
mod ops;
mod optim;
mod real;
mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::grad_check;
pub use ops::{Conv2dSpec, Padding, DIV_EPSILON};
pub use optim::{Adam, AdamConfig, Param, ParamSet};
pub use real::Real;
pub use tensor::Tensor;
