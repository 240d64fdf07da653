//! 2-D convolution via im2col and global average pooling.

use super::linalg::{gemm, Mat};
use super::{Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
        }
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one image `[C, H, W]` into `[C*kh*kw, oh*ow]`.
    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let l = self.out_len();
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * l..(row + 1) * l];
                    for oi in 0..self.oh {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        let line = &mut dst[oi * self.ow..(oi + 1) * self.ow];
                        if ii < 0 || ii >= self.h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &img[(c * self.h + ii as usize) * self.w..][..self.w];
                        for (oj, v) in line.iter_mut().enumerate() {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            *v = if jj < 0 || jj >= self.w as isize {
                                0.0
                            } else {
                                src[jj as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters columns back onto an image, accumulating.
    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        let l = self.out_len();
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * l..(row + 1) * l];
                    for oi in 0..self.oh {
                        let ii = (oi * self.stride + ki) as isize - self.pad as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        let dst = &mut img[(c * self.h + ii as usize) * self.w..][..self.w];
                        for oj in 0..self.ow {
                            let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                            if jj >= 0 && jj < self.w as isize {
                                dst[jj as usize] += src[oi * self.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<'g> Var<'g> {
    /// Cross-correlation of `[B, C, H, W]` input with `[O, C, kh, kw]` kernels plus a
    /// `[O]` bias, zero padded.
    pub fn conv2d(self, weight: Var<'g>, bias: Var<'g>, spec: Conv2dSpec) -> Result<Var<'g>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        if x.rank() != 4 || w.rank() != 4 || b.rank() != 1 {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
            ));
        }
        let (bs, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (o, wc, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        if wc != c || b.shape()[0] != o {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
            ));
        }
        if spec.stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if h + 2 * spec.padding < kh || wd + 2 * spec.padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{wd}"),
            ));
        }
        let geo = Geometry {
            c,
            h,
            w: wd,
            kh,
            kw,
            oh: (h + 2 * spec.padding - kh) / spec.stride + 1,
            ow: (wd + 2 * spec.padding - kw) / spec.stride + 1,
            stride: spec.stride,
            pad: spec.padding,
        };
        let (pl, l) = (geo.patch_len(), geo.out_len());
        let img_len = c * h * wd;
        let mut out = vec![0.0; bs * o * l];
        let mut cols = vec![0.0; pl * l];
        for i in 0..bs {
            geo.im2col(&x.data()[i * img_len..(i + 1) * img_len], &mut cols);
            let dst = &mut out[i * o * l..(i + 1) * o * l];
            for (oc, chunk) in dst.chunks_mut(l).enumerate() {
                chunk.fill(b.data()[oc]);
            }
            gemm(Mat::new(w.data(), o, pl), Mat::new(&cols, pl, l), 1.0, dst);
        }
        let out = Tensor::new([bs, o, geo.oh, geo.ow], out)?;
        let (need_x, need_w, need_b) = (
            self.requires_grad(),
            weight.requires_grad(),
            bias.requires_grad(),
        );
        let in_shape = x.shape().to_vec();
        let w_shape = w.shape().to_vec();
        Ok(self.graph.record(out, &[self, weight, bias], move |g| {
            let gd = g.data();
            let mut gx = need_x.then(|| vec![0.0; bs * img_len]);
            let mut gw = need_w.then(|| vec![0.0; o * pl]);
            let mut cols = vec![0.0; pl * l];
            for i in 0..bs {
                let gout = Mat::new(&gd[i * o * l..(i + 1) * o * l], o, l);
                if let Some(gw) = gw.as_mut() {
                    geo.im2col(&x.data()[i * img_len..(i + 1) * img_len], &mut cols);
                    gemm(gout, Mat::new(&cols, pl, l).t(), 1.0, gw);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm(Mat::new(w.data(), o, pl).t(), gout, 0.0, &mut cols);
                    geo.col2im(&cols, &mut gx[i * img_len..(i + 1) * img_len]);
                }
            }
            let gb = need_b.then(|| {
                let mut acc = vec![0.0; o];
                for (k, chunk) in gd.chunks(l.max(1)).enumerate() {
                    acc[k % o] += chunk.iter().sum::<f64>();
                }
                Tensor::new([o], acc).expect("bias shape")
            });
            vec![
                gx.map(|d| Tensor::new(in_shape.clone(), d).expect("shape")),
                gw.map(|d| Tensor::new(w_shape.clone(), d).expect("shape")),
                gb,
            ]
        }))
    }

    /// `[B, C, H, W] -> [B, C]` by averaging each channel's spatial map.
    pub fn global_avg_pool(self) -> Result<Var<'g>> {
        let x = self.value();
        if x.rank() != 4 {
            return Err(Error::shape("global_avg_pool", format!("{:?}", x.shape())));
        }
        let (bs, c) = (x.shape()[0], x.shape()[1]);
        let hw = x.shape()[2] * x.shape()[3];
        if hw == 0 {
            return Err(Error::shape("global_avg_pool", "empty spatial extent"));
        }
        let out: Vec<f64> = x
            .data()
            .chunks(hw)
            .map(|ch| ch.iter().sum::<f64>() / hw as f64)
            .collect();
        let in_shape = x.shape().to_vec();
        let out = Tensor::new([bs, c], out)?;
        Ok(self.graph.record(out, &[self], move |g| {
            let mut gx = Vec::with_capacity(bs * c * hw);
            for &v in g.data() {
                gx.extend(std::iter::repeat_n(v / hw as f64, hw));
            }
            vec![Some(Tensor::new(in_shape.clone(), gx).expect("shape"))]
        }))
    }
}
