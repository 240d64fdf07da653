use crate::diffcore::{Rng, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SHIFT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShiftSpec {
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            max_shift: DEFAULT_MAX_SHIFT,
            seed: 0,
        }
    }
}

/// Integer translation `(dy, dx)`: content moves down by `dy` rows and right by
/// `dx` columns.
pub type Offset = (i64, i64);

/// Translates one `[C, H, W]` image with zero fill.
pub fn shift_image(image: &[f64], channels: usize, height: usize, width: usize, (dy, dx): Offset) -> Vec<f64> {
    let mut out = vec![0.0; image.len()];
    for c in 0..channels {
        let plane = c * height * width;
        for i in 0..height {
            let si = i as i64 - dy;
            if si < 0 || si >= height as i64 {
                continue;
            }
            for j in 0..width {
                let sj = j as i64 - dx;
                if sj >= 0 && sj < width as i64 {
                    out[plane + i * width + j] = image[plane + si as usize * width + sj as usize];
                }
            }
        }
    }
    out
}

/// One offset per image, each axis uniform on `[-max_shift, max_shift]`.
pub fn draw_offsets(n: usize, max_shift: usize, rng: &mut Rng) -> Vec<Offset> {
    let m = max_shift as i64;
    (0..n)
        .map(|_| {
            let dy = rng.int_inclusive(-m, m);
            (dy, rng.int_inclusive(-m, m))
        })
        .collect()
}

pub(crate) fn check_shift(op: &'static str, images: &Tensor, max_shift: usize) -> Result<(usize, usize, usize)> {
    let s = images.shape();
    if s.len() != 4 {
        return Err(Error::shape(op, format!("expected [N, C, H, W], got {s:?}")));
    }
    if max_shift >= s[2] || max_shift >= s[3] {
        return Err(Error::invalid(
            op,
            format!("max_shift {max_shift} does not fit a {}x{} image", s[2], s[3]),
        ));
    }
    Ok((s[1], s[2], s[3]))
}

/// Applies `offsets[k]` to image `k`.
pub fn shift_with_offsets(images: &Tensor, offsets: &[Offset]) -> Result<Tensor> {
    let largest = offsets
        .iter()
        .map(|&(dy, dx)| dy.unsigned_abs().max(dx.unsigned_abs()) as usize)
        .max()
        .unwrap_or(0);
    let (c, h, w) = check_shift("shift_with_offsets", images, largest)?;
    if offsets.len() != images.shape()[0] {
        return Err(Error::shape(
            "shift_with_offsets",
            format!("{} offsets for {} images", offsets.len(), images.shape()[0]),
        ));
    }
    let per = c * h * w;
    let mut data = Vec::with_capacity(images.len());
    for (img, &off) in images.data().chunks(per.max(1)).zip(offsets) {
        data.extend(shift_image(img, c, h, w, off));
    }
    Tensor::new(images.shape().to_vec(), data)
}

/// Shifted copy of an evaluation set, offsets drawn from `spec.seed`.
pub fn shift_dataset(images: &Tensor, spec: ShiftSpec) -> Result<Tensor> {
    check_shift("shift_dataset", images, spec.max_shift)?;
    let mut rng = Rng::seed(spec.seed);
    let offsets = draw_offsets(images.shape()[0], spec.max_shift, &mut rng);
    shift_with_offsets(images, &offsets)
}
