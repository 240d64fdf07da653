use crate::diffcore::{reparam_sample, Rng, Tensor, Var};
use crate::error::{Error, Result};

/// Additive noise `x + eps`, `eps ~ N(mu, diag(exp(log_sigma))^2)` drawn
/// independently per batch element.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianAug {
    /// `[D]`
    pub mu: Tensor,
    /// `[D]`
    pub log_sigma: Tensor,
}

impl GaussianAug {
    pub fn new(dim: usize, mu: f64, sigma: f64) -> Result<Self> {
        if dim == 0 || !(sigma > 0.0) || !mu.is_finite() {
            return Err(Error::invalid(
                "GaussianAug::new",
                format!("dim {dim}, mu {mu}, sigma {sigma}"),
            ));
        }
        Ok(Self {
            mu: Tensor::full([dim], mu),
            log_sigma: Tensor::full([dim], sigma.ln()),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub(crate) fn forward<'g>(&self, mu: Var<'g>, log_sigma: Var<'g>, x: Var<'g>, rng: &mut Rng) -> Result<Var<'g>> {
        let shape = x.shape();
        let d = self.dim();
        let rows = shape.first().copied().unwrap_or(0);
        if shape.len() < 2 || shape[1..].iter().product::<usize>() != d {
            return Err(Error::shape(
                "gaussian_augment",
                format!("input {shape:?} for noise dimension {d}"),
            ));
        }
        let eps = reparam_sample(mu.broadcast_rows(rows), log_sigma.broadcast_rows(rows), rng)?;
        x.add(eps.reshape(shape)?)
    }
}
