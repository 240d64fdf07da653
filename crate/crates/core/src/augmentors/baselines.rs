//! Static, non-learned augmentations used as controls.

use crate::data::{check_shift, draw_offsets, shift_with_offsets};
use crate::diffcore::{affine_grid, grid_sample_bilinear, Graph, Rng, Tensor};
use crate::error::{Error, Result};

/// `(1 - alpha) * x1 + alpha * x2`.
pub fn mixup_baseline(x1: &Tensor, x2: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("mixup_baseline", format!("alpha {alpha} outside [0, 1]")));
    }
    if x1.shape() != x2.shape() {
        return Err(Error::shape("mixup_baseline", format!("{:?} vs {:?}", x1.shape(), x2.shape())));
    }
    // Endpoints are returned exactly rather than through floating arithmetic.
    if alpha == 0.0 {
        return Ok(x1.clone());
    }
    if alpha == 1.0 {
        return Ok(x2.clone());
    }
    Tensor::new(
        x1.shape().to_vec(),
        x1.data().iter().zip(x2.data()).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect(),
    )
}

/// Mixes every row with a uniformly chosen partner row, with a fresh
/// `alpha ~ U[0, 1]` per row.
pub fn mixup_batch(x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    let rows = *x.shape().first().ok_or_else(|| Error::shape("mixup_batch", "scalar input"))?;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..rows {
        let j = rng.below(rows);
        let alpha = rng.uniform(0.0, 1.0);
        let a = x.select_rows(&[i])?;
        let b = x.select_rows(&[j])?;
        out.extend(mixup_baseline(&a, &b, alpha)?.into_data());
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Sampling ranges for [`random_affine_baseline`]. Every parameter is drawn
/// uniformly and independently; the transform acts on content about the image
/// center.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomAffineRanges {
    /// Largest translation per axis, in pixels.
    pub max_shift: f64,
    /// Largest rotation magnitude, in degrees.
    pub max_rotation: f64,
    /// Content magnification interval.
    pub scale: (f64, f64),
    /// Largest horizontal shear magnitude, in degrees.
    pub max_shear: f64,
    /// When set, draws are rejected until a centered box of this side (pixels)
    /// stays entirely on the canvas.
    pub visible_box: Option<usize>,
}

impl RandomAffineRanges {
    pub fn zero() -> Self {
        Self {
            max_shift: 0.0,
            max_rotation: 0.0,
            scale: (1.0, 1.0),
            max_shear: 0.0,
            visible_box: None,
        }
    }

    /// Shift up to a quarter of the width, 15 degrees of rotation, magnification
    /// in `[0.85, 1.15]`, no shear, and the 20x20 content box kept visible.
    pub fn defaults_for(width: usize) -> Self {
        Self {
            max_shift: 0.25 * width as f64,
            max_rotation: 15.0,
            scale: (0.85, 1.15),
            max_shear: 0.0,
            visible_box: Some(20),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.max_shift >= 0.0
            && self.max_rotation >= 0.0
            && self.max_shear >= 0.0
            && self.max_shear < 90.0
            && self.scale.0 > 0.0
            && self.scale.0 <= self.scale.1
            && [self.max_shift, self.max_rotation, self.max_shear, self.scale.0, self.scale.1]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("random_affine_baseline", format!("degenerate ranges {self:?}")))
        }
    }
}

/// A content transform in pixel units about the image center:
/// `p_out = M p_in + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelAffine {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl PixelAffine {
    pub fn sample(r: &RandomAffineRanges, rng: &mut Rng) -> Self {
        let phi = rng.uniform(-r.max_rotation, r.max_rotation).to_radians();
        let s = rng.uniform(r.scale.0, r.scale.1);
        let shear = rng.uniform(-r.max_shear, r.max_shear).to_radians().tan();
        let tx = rng.uniform(-r.max_shift, r.max_shift);
        let ty = rng.uniform(-r.max_shift, r.max_shift);
        let (c, sn) = (phi.cos(), phi.sin());
        // rotation * shear, then scale
        let m = [[s * c, s * (c * shear - sn)], [s * sn, s * (sn * shear + c)]];
        Self { m, t: [tx, ty] }
    }

    /// Whether a centered `side x side` box of pixel centers stays inside a
    /// `height x width` canvas.
    pub fn keeps_box(&self, side: usize, height: usize, width: usize) -> bool {
        let half = (side as f64 - 1.0) / 2.0;
        let (hx, hy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        [(-half, -half), (-half, half), (half, -half), (half, half)].iter().all(|&(x, y)| {
            let ox = self.m[0][0] * x + self.m[0][1] * y + self.t[0];
            let oy = self.m[1][0] * x + self.m[1][1] * y + self.t[1];
            ox.abs() <= hx + 1e-9 && oy.abs() <= hy + 1e-9
        })
    }

    /// The sampling matrix in normalized coordinates (output -> input).
    pub fn theta(&self, height: usize, width: usize) -> Result<[f64; 6]> {
        let [[a, b], [c, d]] = self.m;
        let det = a * d - b * c;
        if det.abs() < 1e-12 {
            return Err(Error::invalid("PixelAffine::theta", "singular transform"));
        }
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let (dx, dy) = (((width.max(2) - 1) as f64) / 2.0, ((height.max(2) - 1) as f64) / 2.0);
        // theta_lin = D^-1 M^-1 D, theta_off = -D^-1 M^-1 t
        let off = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]) / dx,
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]) / dy,
        ];
        Ok([
            inv[0][0],
            inv[0][1] * dy / dx,
            off[0],
            inv[1][0] * dx / dy,
            inv[1][1],
            off[1],
        ])
    }
}

const MAX_REJECTIONS: usize = 10_000;

/// Resamples every image with its own transform drawn from `ranges`.
pub fn random_affine_baseline(x: &Tensor, rng: &mut Rng, ranges: &RandomAffineRanges) -> Result<Tensor> {
    ranges.validate()?;
    let s = x.shape();
    if s.len() != 4 || s[2] < 2 || s[3] < 2 {
        return Err(Error::shape("random_affine_baseline", format!("expected [B, C, H>=2, W>=2], got {s:?}")));
    }
    let (h, w) = (s[2], s[3]);
    let mut thetas = Vec::with_capacity(s[0] * 6);
    for _ in 0..s[0] {
        let mut tries = 0;
        let tf = loop {
            let tf = PixelAffine::sample(ranges, rng);
            match ranges.visible_box {
                Some(side) if !tf.keeps_box(side, h, w) => {
                    tries += 1;
                    if tries == MAX_REJECTIONS {
                        return Err(Error::invalid(
                            "random_affine_baseline",
                            format!("no draw keeps the {side}px box visible under {ranges:?}"),
                        ));
                    }
                }
                _ => break tf,
            }
        };
        thetas.extend(tf.theta(h, w)?);
    }
    let g = Graph::new();
    let theta = g.constant(Tensor::new([s[0], 2, 3], thetas)?);
    let out = grid_sample_bilinear(g.constant(x.clone()), affine_grid(theta, h, w)?)?;
    Ok((*out.value()).clone())
}

/// Integer shifts drawn like the shifted evaluation set, with zero fill.
pub fn oracle_shift_baseline(x: &Tensor, rng: &mut Rng, max_shift: usize) -> Result<Tensor> {
    check_shift("oracle_shift_baseline", x, max_shift)?;
    let offsets = draw_offsets(x.shape()[0], max_shift, rng);
    shift_with_offsets(x, &offsets)
}
