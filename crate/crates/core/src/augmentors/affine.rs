use crate::diffcore::{affine_grid, grid_sample_bilinear, reparam_sample, Rng, Tensor, Var};
use crate::error::{Error, Result};

pub const IDENTITY_THETA: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Initial spread of every matrix entry.
pub const INITIAL_SIGMA: f64 = 1e-3;

/// Per-image affine resampling with matrix entries drawn from
/// `N(theta_mu, exp(theta_log_sigma)^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineAug {
    /// `[2, 3]`
    pub theta_mu: Tensor,
    /// `[2, 3]`
    pub theta_log_sigma: Tensor,
}

impl Default for AffineAug {
    /// Identity mean with sigma `1e-3`.
    fn default() -> Self {
        Self::with_mean(IDENTITY_THETA, INITIAL_SIGMA)
    }
}

impl AffineAug {
    pub fn with_mean(theta: [f64; 6], sigma: f64) -> Self {
        Self {
            theta_mu: Tensor::new([2, 3], theta.to_vec()).expect("2x3"),
            theta_log_sigma: Tensor::full([2, 3], sigma.ln()),
        }
    }

    pub(crate) fn forward<'g>(&self, mu: Var<'g>, log_sigma: Var<'g>, x: Var<'g>, rng: &mut Rng) -> Result<Var<'g>> {
        let s = x.shape();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::shape("affine_augment", format!("expected [B, C, H>=2, W>=2], got {s:?}")));
        }
        let theta = reparam_sample(mu.broadcast_rows(s[0]), log_sigma.broadcast_rows(s[0]), rng)?;
        if !theta.value().all_finite() {
            return Err(Error::NonFinite {
                what: "affine_augment theta draw".into(),
            });
        }
        grid_sample_bilinear(x, affine_grid(theta, s[2], s[3])?)
    }
}
