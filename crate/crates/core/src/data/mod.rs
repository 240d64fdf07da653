//! The 1-D toy task, IDX digit files, shifted evaluation sets, procedural
//! sprites and batch streams.

mod batches;
pub mod idx;
mod shift;
mod synth;
mod toy;

pub use batches::BatchStream;
pub use idx::{load_idx_dataset, load_idx_images, load_idx_labels, load_mnist_dir, parse_idx_images, parse_idx_labels};
pub use shift::{draw_offsets, shift_dataset, shift_image, shift_with_offsets, Offset, ShiftSpec, DEFAULT_MAX_SHIFT};
pub use synth::{render_sprite, synth_shapes, CLASS_NAMES};
pub use toy::{make_toy_dataset, make_toy_dataset_with, ClusterSpec, ToyDataset};

pub(crate) use shift::check_shift;

use crate::diffcore::Tensor;
use crate::error::Result;

/// Labelled `[N, 1, H, W]` images with pixels in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct DigitDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub split: String,
}

impl DigitDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.images.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split.clone(),
        })
    }

    /// The first `n` samples, or all of them.
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}
