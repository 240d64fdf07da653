//! Teacher and student function families.
//!
//! Every model keeps its parameters as plain tensors and exposes a forward pass
//! over graph variables, so the same code serves training (parameters bound as
//! leaves) and frozen use (parameters bound as constants, gradients still flowing
//! to the input).

mod checkpoint;
mod cnn;
mod mlp;

pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use cnn::{Cnn, CnnConfig};
pub use mlp::Mlp;

use crate::diffcore::{Graph, Rng, Tensor, Var};
use crate::error::{Error, FormatError, Result};

/// Rows per forward pass in [`Model::predict`].
const PREDICT_CHUNK: usize = 256;

pub trait Model {
    /// Architecture string stored in checkpoints, e.g. `mlp:1-64-64-1`.
    fn descriptor(&self) -> String;

    /// Parameter names and shapes, in the order of [`Model::params`].
    fn param_specs(&self) -> Vec<(String, Vec<usize>)>;

    fn params(&self) -> &[Tensor];

    fn params_mut(&mut self) -> &mut [Tensor];

    fn forward<'g>(&self, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>>;

    /// Parameters as graph leaves (`trainable`) or constants.
    fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> Vec<Var<'g>> {
        self.params()
            .iter()
            .map(|p| {
                if trainable {
                    g.leaf(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    /// Forward pass with frozen parameters; gradients still reach `x`.
    fn apply<'g>(&self, x: Var<'g>) -> Result<Var<'g>> {
        let params = self.bind(x.graph(), false);
        self.forward(&params, x)
    }

    /// Gradient-free evaluation, chunked along the batch axis.
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let rows = *x
            .shape()
            .first()
            .ok_or_else(|| Error::shape("predict", "input has no batch axis"))?;
        let mut shape = Vec::new();
        let mut data = Vec::new();
        for start in (0..rows).step_by(PREDICT_CHUNK) {
            let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(rows)).collect();
            let g = Graph::new();
            let out = self.apply(g.constant(x.select_rows(&idx)?))?.value();
            shape = out.shape().to_vec();
            data.extend_from_slice(out.data());
        }
        if rows == 0 {
            let g = Graph::new();
            return Ok((*self.apply(g.constant(x.clone()))?.value()).clone());
        }
        shape[0] = rows;
        Tensor::new(shape, data)
    }

    fn checkpoint(&self) -> Checkpoint {
        let tensors = self
            .param_specs()
            .into_iter()
            .map(|(name, _)| name)
            .zip(self.params().iter().cloned())
            .collect();
        Checkpoint::new(self.descriptor(), tensors)
    }

    /// Replaces the parameters with those of `ck`, which must describe the same
    /// architecture.
    fn load_checkpoint(&mut self, ck: Checkpoint) -> Result<()> {
        let expected = self.descriptor();
        if ck.descriptor != expected {
            return Err(FormatError::Architecture {
                expected,
                found: ck.descriptor,
            }
            .into());
        }
        let tensors = ck.into_tensors(&self.param_specs())?;
        if let Some(bad) = tensors.iter().position(|t| !t.all_finite()) {
            return Err(Error::NonFinite {
                what: format!("checkpoint tensor {bad}"),
            });
        }
        for (p, t) in self.params_mut().iter_mut().zip(tensors) {
            *p = t;
        }
        Ok(())
    }
}

/// The analytic toy teacher `f(x) = cos(x)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct CosTeacher;

impl Model for CosTeacher {
    fn descriptor(&self) -> String {
        "cos".into()
    }

    fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        Vec::new()
    }

    fn params(&self) -> &[Tensor] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut []
    }

    fn forward<'g>(&self, _params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
        Ok(x.cos())
    }
}

/// Elementwise cosine of a plain tensor.
pub fn cos_teacher(x: &Tensor) -> Tensor {
    x.map(f64::cos)
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual default for dense and conv layers.
pub(crate) fn fan_in_uniform(shape: impl Into<Vec<usize>>, fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

pub(crate) fn check_params(op: &'static str, specs: &[(String, Vec<usize>)], params: &[Tensor]) -> Result<()> {
    if specs.len() != params.len() {
        return Err(Error::shape(
            op,
            format!("expected {} tensors, got {}", specs.len(), params.len()),
        ));
    }
    for ((name, shape), p) in specs.iter().zip(params) {
        if p.shape() != shape.as_slice() {
            return Err(Error::shape(op, format!("{name}: {:?}, expected {shape:?}", p.shape())));
        }
        if !p.all_finite() {
            return Err(Error::NonFinite {
                what: format!("{op} parameter {name}"),
            });
        }
    }
    Ok(())
}
