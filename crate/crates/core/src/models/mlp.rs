use super::{check_params, fan_in_uniform, Model};
use crate::diffcore::{Rng, Tensor, Var};
use crate::error::{Error, Result};

/// Three dense layers with ReLU between them: `in -> h1 -> h2 -> out`.
///
/// Weights are stored `[fan_in, fan_out]` so a batch `[B, in]` multiplies on the
/// left. Inputs of higher rank are flattened over their trailing axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: [usize; 4],
    params: Vec<Tensor>,
}

impl Mlp {
    pub fn new(widths: [usize; 4], rng: &mut Rng) -> Result<Self> {
        if widths.contains(&0) {
            return Err(Error::invalid("Mlp::new", format!("zero width in {widths:?}")));
        }
        let mut params = Vec::with_capacity(6);
        for l in 0..3 {
            let (i, o) = (widths[l], widths[l + 1]);
            params.push(fan_in_uniform([i, o], i, rng));
            params.push(fan_in_uniform([o], i, rng));
        }
        Ok(Self { widths, params })
    }

    /// Builds from explicit `[w1, b1, w2, b2, w3, b3]`.
    pub fn from_params(widths: [usize; 4], params: Vec<Tensor>) -> Result<Self> {
        let m = Self { widths, params };
        check_params("Mlp::from_params", &m.param_specs(), &m.params)?;
        Ok(m)
    }

    pub fn widths(&self) -> [usize; 4] {
        self.widths
    }
}

impl Model for Mlp {
    fn descriptor(&self) -> String {
        let w = self.widths;
        format!("mlp:{}-{}-{}-{}", w[0], w[1], w[2], w[3])
    }

    fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        (0..3)
            .flat_map(|l| {
                let (i, o) = (self.widths[l], self.widths[l + 1]);
                [
                    (format!("fc{}.weight", l + 1), vec![i, o]),
                    (format!("fc{}.bias", l + 1), vec![o]),
                ]
            })
            .collect()
    }

    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn forward<'g>(&self, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
        if params.len() != 6 {
            return Err(Error::shape("mlp_forward", format!("{} parameter tensors", params.len())));
        }
        let shape = x.shape();
        let d_in = self.widths[0];
        let flat: usize = shape.iter().skip(1).product();
        if shape.len() < 2 || flat != d_in {
            return Err(Error::shape(
                "mlp_forward",
                format!("input {shape:?} for input width {d_in}"),
            ));
        }
        let mut h = if shape.len() == 2 { x } else { x.reshape([shape[0], d_in])? };
        for l in 0..3 {
            h = h.matmul(params[2 * l])?.add_row_vector(params[2 * l + 1])?;
            if l < 2 {
                h = h.relu();
            }
        }
        Ok(h)
    }
}
