//! Elementwise, reduction, shape and matrix operations on [`Var`].

use super::linalg::{gemm, Mat};
use super::{Tensor, Var};
use crate::error::{Error, Result};

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Row-major strides of `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Moves axis `axes[i]` of the input to position `i` of the output.
fn permute_tensor(t: &Tensor, axes: &[usize]) -> Tensor {
    let in_shape = t.shape();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    // Input stride for each output axis.
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    let data = t.data();
    for _ in 0..n {
        out.push(data[src]);
        // Odometer increment over the output index.
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= src_strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Tensor::new(out_shape, out).expect("permute preserves size")
}

impl<'g> Var<'g> {
    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        check_same_shape("add", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x + y);
        Ok(self.graph.record(out, &[self, other], |g| {
            vec![Some(g.clone()), Some(g.clone())]
        }))
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        check_same_shape("sub", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x - y);
        Ok(self.graph.record(out, &[self, other], |g| {
            vec![Some(g.clone()), Some(g.map(|v| -v))]
        }))
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        check_same_shape("mul", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x * y);
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(self.graph.record(out, &[self, other], move |g| {
            vec![
                need_a.then(|| g.zip_map(&b, |gv, bv| gv * bv)),
                need_b.then(|| g.zip_map(&a, |gv, av| gv * av)),
            ]
        }))
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let out = self.value().map(|v| v * c);
        self.graph
            .record(out, &[self], move |g| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        let out = self.value().map(|v| v + c);
        self.graph.record(out, &[self], |g| vec![Some(g.clone())])
    }

    pub fn square(self) -> Var<'g> {
        let x = self.value();
        let out = x.map(|v| v * v);
        self.graph.record(out, &[self], move |g| {
            vec![Some(g.zip_map(&x, |gv, xv| 2.0 * gv * xv))]
        })
    }

    pub fn relu(self) -> Var<'g> {
        let x = self.value();
        let out = x.map(|v| v.max(0.0));
        self.graph.record(out, &[self], move |g| {
            vec![Some(g.zip_map(&x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }))]
        })
    }

    pub fn exp(self) -> Var<'g> {
        let out = std::rc::Rc::new(self.value().map(f64::exp));
        let y = std::rc::Rc::clone(&out);
        self.graph.record((*out).clone(), &[self], move |g| {
            vec![Some(g.zip_map(&y, |gv, yv| gv * yv))]
        })
    }

    /// Natural logarithm. No clamping: non-positive inputs give `-inf`/NaN.
    pub fn log(self) -> Var<'g> {
        let x = self.value();
        let out = x.map(f64::ln);
        self.graph.record(out, &[self], move |g| {
            vec![Some(g.zip_map(&x, |gv, xv| gv / xv))]
        })
    }

    pub fn cos(self) -> Var<'g> {
        let x = self.value();
        let out = x.map(f64::cos);
        self.graph.record(out, &[self], move |g| {
            vec![Some(g.zip_map(&x, |gv, xv| -gv * xv.sin()))]
        })
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(self) -> Var<'g> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(x.sum());
        self.graph.record(out, &[self], move |g| {
            vec![Some(Tensor::full(shape.clone(), g.data()[0]))]
        })
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(self) -> Var<'g> {
        let n = self.value().len();
        self.sum().scale(1.0 / n as f64)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g>> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let out = (*x).clone().reshape(shape)?;
        Ok(self.graph.record(out, &[self], move |g| {
            vec![Some(g.clone().reshape(in_shape.clone()).expect("same size"))]
        }))
    }

    /// Axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'g>> {
        let x = self.value();
        let rank = x.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::invalid(
                "permute",
                format!("{axes:?} is not a permutation of {rank} axes"),
            ));
        }
        let out = permute_tensor(&x, axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self
            .graph
            .record(out, &[self], move |g| vec![Some(permute_tensor(g, &inverse))]))
    }

    /// Repeats the whole tensor `n` times along a new leading axis.
    pub fn broadcast_rows(self, n: usize) -> Var<'g> {
        let x = self.value();
        let m = x.len();
        let mut shape = vec![n];
        shape.extend_from_slice(x.shape());
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            data.extend_from_slice(x.data());
        }
        let in_shape = x.shape().to_vec();
        let out = Tensor::new(shape, data).expect("broadcast size");
        self.graph.record(out, &[self], move |g| {
            let mut acc = vec![0.0; m];
            for row in g.data().chunks(m.max(1)) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            vec![Some(Tensor::new(in_shape.clone(), acc).expect("shape"))]
        })
    }

    /// Gathers entries of the leading axis; indices may repeat.
    pub fn select_rows(self, indices: &[usize]) -> Result<Var<'g>> {
        let x = self.value();
        let out = x.select_rows(indices)?;
        let rows = x.shape()[0];
        let stride = if rows == 0 { 0 } else { x.len() / rows };
        let in_shape = x.shape().to_vec();
        let indices = indices.to_vec();
        Ok(self.graph.record(out, &[self], move |g| {
            let mut acc = Tensor::zeros(in_shape.clone());
            let d = acc.data_mut();
            for (k, &i) in indices.iter().enumerate() {
                let src = &g.data()[k * stride..(k + 1) * stride];
                for (a, v) in d[i * stride..(i + 1) * stride].iter_mut().zip(src) {
                    *a += v;
                }
            }
            vec![Some(acc)]
        }))
    }

    /// Adds a `[N]` vector to every trailing row of a `[..., N]` tensor.
    pub fn add_row_vector(self, bias: Var<'g>) -> Result<Var<'g>> {
        let (x, b) = (self.value(), bias.value());
        let n = b.len();
        if b.rank() != 1 || x.shape().last() != Some(&n) {
            return Err(Error::shape(
                "add_row_vector",
                format!("{:?} + {:?}", x.shape(), b.shape()),
            ));
        }
        let mut out = (*x).clone();
        for row in out.data_mut().chunks_mut(n.max(1)) {
            for (v, bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        let need_b = bias.requires_grad();
        Ok(self.graph.record(out, &[self, bias], move |g| {
            let gb = need_b.then(|| {
                let mut acc = vec![0.0; n];
                for row in g.data().chunks(n.max(1)) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                Tensor::new([n], acc).expect("bias shape")
            });
            vec![Some(g.clone()), gb]
        }))
    }

    /// `[M, K] x [K, N] -> [M, N]`.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(Mat::new(a.data(), m, k), Mat::new(b.data(), k, n), 0.0, &mut out);
        let out = Tensor::new([m, n], out)?;
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(self.graph.record(out, &[self, other], move |g| {
            let ga = need_a.then(|| {
                let mut d = vec![0.0; m * k];
                gemm(Mat::new(g.data(), m, n), Mat::new(b.data(), k, n).t(), 0.0, &mut d);
                Tensor::new([m, k], d).expect("shape")
            });
            let gb = need_b.then(|| {
                let mut d = vec![0.0; k * n];
                gemm(Mat::new(a.data(), m, k).t(), Mat::new(g.data(), m, n), 0.0, &mut d);
                Tensor::new([k, n], d).expect("shape")
            });
            vec![ga, gb]
        }))
    }

    /// Batched matrix product `[B, M, K] x [B, K, N] -> [B, M, N]`.
    pub fn bmm(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        if a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[1]
        {
            return Err(Error::shape("bmm", format!("{:?} x {:?}", a.shape(), b.shape())));
        }
        let (bs, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            gemm(
                Mat::new(&a.data()[i * m * k..(i + 1) * m * k], m, k),
                Mat::new(&b.data()[i * k * n..(i + 1) * k * n], k, n),
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let out = Tensor::new([bs, m, n], out)?;
        let (need_a, need_b) = (self.requires_grad(), other.requires_grad());
        Ok(self.graph.record(out, &[self, other], move |g| {
            let gd = g.data();
            let ga = need_a.then(|| {
                let mut d = vec![0.0; bs * m * k];
                for i in 0..bs {
                    gemm(
                        Mat::new(&gd[i * m * n..(i + 1) * m * n], m, n),
                        Mat::new(&b.data()[i * k * n..(i + 1) * k * n], k, n).t(),
                        0.0,
                        &mut d[i * m * k..(i + 1) * m * k],
                    );
                }
                Tensor::new([bs, m, k], d).expect("shape")
            });
            let gb = need_b.then(|| {
                let mut d = vec![0.0; bs * k * n];
                for i in 0..bs {
                    gemm(
                        Mat::new(&a.data()[i * m * k..(i + 1) * m * k], m, k).t(),
                        Mat::new(&gd[i * m * n..(i + 1) * m * n], m, n),
                        0.0,
                        &mut d[i * k * n..(i + 1) * k * n],
                    );
                }
                Tensor::new([bs, k, n], d).expect("shape")
            });
            vec![ga, gb]
        }))
    }

    /// Softmax of `x / temperature` over the last axis, with max subtraction.
    pub fn softmax_last(self, temperature: f64) -> Result<Var<'g>> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::invalid(
                "softmax",
                format!("temperature must be positive and finite, got {temperature}"),
            ));
        }
        let x = self.value();
        let c = match x.shape().last() {
            Some(&c) if c >= 1 => c,
            _ => {
                return Err(Error::shape(
                    "softmax",
                    format!("need a non-empty last axis, got {:?}", x.shape()),
                ))
            }
        };
        let mut out = (*x).clone();
        for row in out.data_mut().chunks_mut(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = ((*v - max) / temperature).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let y = std::rc::Rc::new(out);
        let yc = std::rc::Rc::clone(&y);
        Ok(self.graph.record((*y).clone(), &[self], move |g| {
            let mut gx = g.clone();
            for (grow, yrow) in gx.data_mut().chunks_mut(c).zip(yc.data().chunks(c)) {
                let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                for (gv, yv) in grow.iter_mut().zip(yrow) {
                    *gv = yv * (*gv - dot) / temperature;
                }
            }
            vec![Some(gx)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Graph;

    #[test]
    fn permute_matches_index_formula() {
        let t = Tensor::new([2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let p = permute_tensor(&t, &[2, 0, 1]);
        assert_eq!(p.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p.data()[k * 6 + i * 3 + j], t.data()[i * 12 + j * 4 + k]);
                }
            }
        }
    }

    #[test]
    fn permute_rejects_non_permutations() {
        let g = Graph::new();
        let x = g.constant(Tensor::zeros([2, 3]));
        assert!(x.permute(&[0, 0]).is_err());
        assert!(x.permute(&[1]).is_err());
        assert!(x.permute(&[1, 2]).is_err());
    }

    #[test]
    fn shape_mismatch_errors() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([3, 2]));
        assert!(a.add(b).is_err());
        assert!(a.mul(b).is_err());
        assert!(a.matmul(a).is_err());
        assert!(a.matmul(b).is_ok());
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        assert!(a.softmax_last(0.0).is_err());
        assert!(a.softmax_last(-1.0).is_err());
        assert!(a.softmax_last(f64::NAN).is_err());
    }
}
