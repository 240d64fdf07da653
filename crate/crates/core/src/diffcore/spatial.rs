//! Differentiable resampling: affine sampling grids and bilinear grid sampling.
//!
//! Normalized coordinates follow the align-corners convention: `-1` is the center
//! of the first pixel and `+1` the center of the last one along each axis. Samples
//! that fall outside the image read zeros.

use super::{Tensor, Var};
use crate::error::{Error, Result};

/// Normalized coordinate of pixel `i` on an axis of `n` pixels.
pub fn normalized_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Maps an output lattice of `height x width` through per-sample affine matrices.
///
/// `theta` is `[B, 2, 3]`; the result is `[B, height, width, 2]` holding
/// `(x_s, y_s) = theta * (u, v, 1)` where `u` runs along the width.
pub fn affine_grid<'g>(theta: Var<'g>, height: usize, width: usize) -> Result<Var<'g>> {
    let t = theta.value();
    if t.rank() != 3 || t.shape()[1] != 2 || t.shape()[2] != 3 {
        return Err(Error::shape("affine_grid", format!("theta must be [B, 2, 3], got {:?}", t.shape())));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("affine_grid", "grid extents must be positive"));
    }
    let bs = t.shape()[0];
    let us: Vec<f64> = (0..width).map(|j| normalized_coord(j, width)).collect();
    let vs: Vec<f64> = (0..height).map(|i| normalized_coord(i, height)).collect();
    let mut out = Vec::with_capacity(bs * height * width * 2);
    for th in t.data().chunks(6) {
        for &v in &vs {
            for &u in &us {
                out.push(th[0] * u + th[1] * v + th[2]);
                out.push(th[3] * u + th[4] * v + th[5]);
            }
        }
    }
    let out = Tensor::new([bs, height, width, 2], out)?;
    Ok(theta.graph.record(out, &[theta], move |g| {
        let mut gt = vec![0.0; bs * 6];
        for (b, gchunk) in g.data().chunks(height * width * 2).enumerate() {
            let acc = &mut gt[b * 6..(b + 1) * 6];
            for (i, &v) in vs.iter().enumerate() {
                for (j, &u) in us.iter().enumerate() {
                    let k = (i * width + j) * 2;
                    let (gx, gy) = (gchunk[k], gchunk[k + 1]);
                    acc[0] += gx * u;
                    acc[1] += gx * v;
                    acc[2] += gx;
                    acc[3] += gy * u;
                    acc[4] += gy * v;
                    acc[5] += gy;
                }
            }
        }
        vec![Some(Tensor::new([bs, 2, 3], gt).expect("theta shape"))]
    }))
}

/// Corner indices and weights of one bilinear sample.
struct Taps {
    x0: isize,
    y0: isize,
    wx1: f64,
    wy1: f64,
}

impl Taps {
    fn new(ix: f64, iy: f64) -> Self {
        let (fx, fy) = (ix.floor(), iy.floor());
        Self {
            x0: fx as isize,
            y0: fy as isize,
            wx1: ix - fx,
            wy1: iy - fy,
        }
    }
}

/// Pixel-space position, or `None` when the sample cannot touch the image.
fn to_pixel(coord: f64, n: usize) -> Option<f64> {
    let p = (coord + 1.0) * 0.5 * (n as f64 - 1.0);
    (p > -1.0 && p < n as f64).then_some(p)
}

/// Bilinear sampling of `image` (`[B, C, H, W]`) at normalized `grid` positions
/// (`[B, H', W', 2]`, last axis `(x, y)`), giving `[B, C, H', W']`.
pub fn grid_sample_bilinear<'g>(image: Var<'g>, grid: Var<'g>) -> Result<Var<'g>> {
    let (img, grd) = (image.value(), grid.value());
    if img.rank() != 4
        || grd.rank() != 4
        || grd.shape()[3] != 2
        || grd.shape()[0] != img.shape()[0]
    {
        return Err(Error::shape(
            "grid_sample_bilinear",
            format!("image {:?}, grid {:?}", img.shape(), grd.shape()),
        ));
    }
    if !grd.all_finite() {
        return Err(Error::NonFinite {
            what: "sampling grid".into(),
        });
    }
    let (bs, c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2], img.shape()[3]);
    let (oh, ow) = (grd.shape()[1], grd.shape()[2]);
    let plane = h * w;
    let opix = oh * ow;
    let at = move |data: &[f64], base: usize, y: isize, x: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            data[base + y as usize * w + x as usize]
        }
    };

    let mut out = vec![0.0; bs * c * opix];
    for b in 0..bs {
        for p in 0..opix {
            let gx = grd.data()[(b * opix + p) * 2];
            let gy = grd.data()[(b * opix + p) * 2 + 1];
            let (Some(ix), Some(iy)) = (to_pixel(gx, w), to_pixel(gy, h)) else {
                continue;
            };
            let t = Taps::new(ix, iy);
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                let d = img.data();
                let v00 = at(d, base, t.y0, t.x0);
                let v01 = at(d, base, t.y0, t.x0 + 1);
                let v10 = at(d, base, t.y0 + 1, t.x0);
                let v11 = at(d, base, t.y0 + 1, t.x0 + 1);
                out[(b * c + ch) * opix + p] = (1.0 - t.wy1) * ((1.0 - t.wx1) * v00 + t.wx1 * v01)
                    + t.wy1 * ((1.0 - t.wx1) * v10 + t.wx1 * v11);
            }
        }
    }
    let out = Tensor::new([bs, c, oh, ow], out)?;
    let (need_img, need_grid) = (image.requires_grad(), grid.requires_grad());
    let (img_shape, grid_shape) = (img.shape().to_vec(), grd.shape().to_vec());
    let sx = 0.5 * (w as f64 - 1.0);
    let sy = 0.5 * (h as f64 - 1.0);
    Ok(image.graph.record(out, &[image, grid], move |g| {
        let gd = g.data();
        let mut gimg = need_img.then(|| vec![0.0; bs * c * plane]);
        let mut ggrid = need_grid.then(|| vec![0.0; bs * opix * 2]);
        for b in 0..bs {
            for p in 0..opix {
                let gx = grd.data()[(b * opix + p) * 2];
                let gy = grd.data()[(b * opix + p) * 2 + 1];
                let (Some(ix), Some(iy)) = (to_pixel(gx, w), to_pixel(gy, h)) else {
                    continue;
                };
                let t = Taps::new(ix, iy);
                let (wx0, wy0) = (1.0 - t.wx1, 1.0 - t.wy1);
                let mut dix = 0.0;
                let mut diy = 0.0;
                for ch in 0..c {
                    let base = (b * c + ch) * plane;
                    let go = gd[(b * c + ch) * opix + p];
                    if go == 0.0 {
                        continue;
                    }
                    if let Some(gi) = gimg.as_mut() {
                        let taps = [
                            (t.y0, t.x0, wy0 * wx0),
                            (t.y0, t.x0 + 1, wy0 * t.wx1),
                            (t.y0 + 1, t.x0, t.wy1 * wx0),
                            (t.y0 + 1, t.x0 + 1, t.wy1 * t.wx1),
                        ];
                        for (y, x, wt) in taps {
                            if x >= 0 && y >= 0 && x < w as isize && y < h as isize {
                                gi[base + y as usize * w + x as usize] += go * wt;
                            }
                        }
                    }
                    if ggrid.is_some() {
                        let d = img.data();
                        let v00 = at(d, base, t.y0, t.x0);
                        let v01 = at(d, base, t.y0, t.x0 + 1);
                        let v10 = at(d, base, t.y0 + 1, t.x0);
                        let v11 = at(d, base, t.y0 + 1, t.x0 + 1);
                        dix += go * (wy0 * (v01 - v00) + t.wy1 * (v11 - v10));
                        diy += go * (wx0 * (v10 - v00) + t.wx1 * (v11 - v01));
                    }
                }
                if let Some(gg) = ggrid.as_mut() {
                    gg[(b * opix + p) * 2] = dix * sx;
                    gg[(b * opix + p) * 2 + 1] = diy * sy;
                }
            }
        }
        vec![
            gimg.map(|d| Tensor::new(img_shape.clone(), d).expect("shape")),
            ggrid.map(|d| Tensor::new(grid_shape.clone(), d).expect("shape")),
        ]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Graph, Rng};

    fn identity_theta(bs: usize) -> Tensor {
        let mut d = Vec::new();
        for _ in 0..bs {
            d.extend_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        }
        Tensor::new([bs, 2, 3], d).unwrap()
    }

    #[test]
    fn identity_grid_is_lattice() {
        let g = Graph::new();
        let grid = affine_grid(g.constant(identity_theta(1)), 3, 4).unwrap().value();
        for i in 0..3 {
            for j in 0..4 {
                let k = (i * 4 + j) * 2;
                assert_eq!(grid.data()[k], normalized_coord(j, 4));
                assert_eq!(grid.data()[k + 1], normalized_coord(i, 3));
            }
        }
    }

    #[test]
    fn translation_and_scale_grids() {
        let g = Graph::new();
        let theta = Tensor::new([1, 2, 3], vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.0]).unwrap();
        let shifted = affine_grid(g.constant(theta), 4, 5).unwrap().value();
        let base = affine_grid(g.constant(identity_theta(1)), 4, 5).unwrap().value();
        for k in 0..20 {
            assert!((shifted.data()[2 * k] - base.data()[2 * k] - 0.5).abs() < 1e-15);
            assert_eq!(shifted.data()[2 * k + 1], base.data()[2 * k + 1]);
        }
        // 0.5 normalized units is one pixel when W = 5.
        assert_eq!(normalized_coord(1, 5) - normalized_coord(0, 5), 0.5);

        let theta = Tensor::new([1, 2, 3], vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        let scaled = affine_grid(g.constant(theta), 3, 3).unwrap().value();
        let d = scaled.data();
        assert_eq!((d[0], d[1]), (-2.0, -2.0));
        assert_eq!((d[4], d[5]), (2.0, -2.0));
        assert_eq!((d[12], d[13]), (-2.0, 2.0));
        assert_eq!((d[16], d[17]), (2.0, 2.0));
    }

    #[test]
    fn identity_sampling_reproduces_image() {
        let mut rng = Rng::seed(5);
        let img = Tensor::randn([2, 3, 5, 7], &mut rng);
        let g = Graph::new();
        let grid = affine_grid(g.constant(identity_theta(2)), 5, 7).unwrap();
        let out = grid_sample_bilinear(g.constant(img.clone()), grid).unwrap().value();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn one_pixel_translation_shifts_indices() {
        let (h, w) = (4, 6);
        let img = Tensor::new([1, 1, h, w], (0..h * w).map(|v| v as f64 + 1.0).collect()).unwrap();
        let dx = 2.0 / (w - 1) as f64;
        let theta = Tensor::new([1, 2, 3], vec![1.0, 0.0, dx, 0.0, 1.0, 0.0]).unwrap();
        let g = Graph::new();
        let grid = affine_grid(g.constant(theta), h, w).unwrap();
        let out = grid_sample_bilinear(g.constant(img.clone()), grid).unwrap().value();
        for i in 0..h {
            for j in 0..w {
                let got = out.data()[i * w + j];
                let expected = if j + 1 < w { img.data()[i * w + j + 1] } else { 0.0 };
                assert!((got - expected).abs() < 1e-9, "({i},{j}): {got} vs {expected}");
            }
        }
    }

    #[test]
    fn far_outside_samples_zero() {
        let g = Graph::new();
        let img = g.constant(Tensor::full([1, 1, 3, 3], 1.0));
        let grid = g.constant(Tensor::new([1, 1, 2, 2], vec![5.0, 0.0, 0.0, -7.0]).unwrap());
        let out = grid_sample_bilinear(img, grid).unwrap().value();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_grid() {
        let g = Graph::new();
        let img = g.constant(Tensor::zeros([1, 1, 3, 3]));
        let grid = g.constant(Tensor::new([1, 1, 1, 2], vec![f64::NAN, 0.0]).unwrap());
        assert!(grid_sample_bilinear(img, grid).is_err());
    }
}
