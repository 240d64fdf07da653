//! Knowledge distillation with adversarially trained augmentors.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffcore`]: tensors, reverse-mode differentiation, resampling ops, Adam.
//! - [`models`]: the cosine teacher, MLP and CNN function families, checkpoints.
//! - [`augmentors`]: learnable Gaussian, affine and patch-mixing augmentors plus
//!   static baselines (mixup, random affine, integer shifts).
//! - [`distill`]: losses, the threshold/patience phase controller, the augmentor
//!   pool and the alternating training loop.
//! - [`data`]: the 1-D toy task, IDX digit files, shifted evaluation sets and a
//!   procedural sprite dataset.

pub mod augmentors;
pub mod data;
pub mod diffcore;
pub mod distill;
mod error;
pub mod models;

pub use error::{Error, FormatError, Result};
