//! Dense tensors, reverse-mode differentiation and first-order optimizers.

mod conv;
pub mod gradcheck;
mod graph;
mod linalg;
pub mod loss;
mod ops;
mod optim;
mod reparam;
mod rng;
pub mod spatial;
mod tensor;

pub use conv::Conv2dSpec;
pub use graph::{Gradients, Graph, Var};
pub use loss::{cross_entropy, kl_divergence, mse, softmax_with_temperature};
pub use optim::{adam_step, Adam, AdamConfig, AdamState};
pub use reparam::{reparam_sample, reparam_with_noise};
pub use rng::Rng;
pub use spatial::{affine_grid, grid_sample_bilinear};
pub use tensor::Tensor;
