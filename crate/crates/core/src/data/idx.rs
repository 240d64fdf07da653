//! Big-endian IDX files: `u32 magic`, `u32` extents, then one byte per entry.

use std::fs;
use std::path::Path;

use super::DigitDataset;
use crate::diffcore::Tensor;
use crate::error::{FormatError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, FormatError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(FormatError::Truncated {
            offset,
            needed: 4,
            available: bytes.len().saturating_sub(offset),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), FormatError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(FormatError::BadMagic {
            expected: format!("{expected:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, extents: &[u32]) -> Result<&'a [u8], FormatError> {
    let n = extents
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| FormatError::ExtentOverflow(format!("{extents:?}")))?;
    let available = bytes.len() - header;
    if n > available {
        return Err(FormatError::Truncated {
            offset: header,
            needed: n,
            available,
        });
    }
    if n < available {
        return Err(FormatError::TrailingBytes(available - n));
    }
    Ok(&bytes[header..])
}

/// Parses an image file into `[N, 1, H, W]` with values `byte / 255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor, FormatError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let dims = [be_u32(bytes, 4)?, be_u32(bytes, 8)?, be_u32(bytes, 12)?];
    let raw = payload(bytes, 16, &dims)?;
    let [n, h, w] = dims.map(|d| d as usize);
    let data = raw.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Tensor::new([n, 1, h, w], data).expect("payload length checked"))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, FormatError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4)?;
    Ok(payload(bytes, 8, &[n])?.to_vec())
}

pub fn encode_idx_images(n: u32, h: u32, w: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n, h, w] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Quantizes `[0, 1]` pixels back to bytes, the inverse of [`parse_idx_images`].
pub fn quantize(pixels: &[f64]) -> Vec<u8> {
    pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(parse_idx_images(&fs::read(path)?)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(parse_idx_labels(&fs::read(path)?)?)
}

/// Pairs an image file with a label file, checking counts and label range.
pub fn load_idx_dataset(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: &str) -> Result<DigitDataset> {
    let x = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if x.shape()[0] != y.len() {
        return Err(FormatError::CountMismatch {
            images: x.shape()[0],
            labels: y.len(),
        }
        .into());
    }
    if let Some(bad) = y.iter().find(|&&l| l > 9) {
        return Err(FormatError::Malformed(format!("label {bad} outside 0..=9")).into());
    }
    Ok(DigitDataset {
        images: x,
        labels: y.into_iter().map(usize::from).collect(),
        split: split.to_string(),
    })
}

/// Standard MNIST file names inside `dir`; `split` is `train` or `test`.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: &str) -> Result<DigitDataset> {
    let prefix = if split == "train" { "train" } else { "t10k" };
    let dir = dir.as_ref();
    load_idx_dataset(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
        split,
    )
}
