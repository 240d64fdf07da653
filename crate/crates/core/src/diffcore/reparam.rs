use super::{Rng, Tensor, Var};
use crate::error::{Error, Result};

/// Draws `mu + exp(log_sigma) * z` with `z ~ N(0, 1)`, differentiable in `mu` and
/// `log_sigma` but not in `z`.
pub fn reparam_sample<'g>(mu: Var<'g>, log_sigma: Var<'g>, rng: &mut Rng) -> Result<Var<'g>> {
    let z = Tensor::randn(mu.shape(), rng);
    reparam_with_noise(mu, log_sigma, &z)
}

/// [`reparam_sample`] with the standard-normal draw supplied by the caller.
pub fn reparam_with_noise<'g>(mu: Var<'g>, log_sigma: Var<'g>, z: &Tensor) -> Result<Var<'g>> {
    let (m, ls) = (mu.value(), log_sigma.value());
    if m.shape() != ls.shape() || m.shape() != z.shape() {
        return Err(Error::shape(
            "reparam_sample",
            format!("mu {:?}, log_sigma {:?}, noise {:?}", m.shape(), ls.shape(), z.shape()),
        ));
    }
    let scaled = ls.zip_map(z, |l, zv| l.exp() * zv);
    let out = m.zip_map(&scaled, |a, b| a + b);
    Ok(mu.graph.record(out, &[mu, log_sigma], move |g| {
        vec![Some(g.clone()), Some(g.zip_map(&scaled, |gv, s| gv * s))]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Graph;

    #[test]
    fn zero_variance_limit_returns_mean() {
        let g = Graph::new();
        let mut rng = Rng::seed(0);
        let mu = g.constant(Tensor::from_slice(&[0.5, -2.0, 3.0]));
        let ls = g.constant(Tensor::full([3], -30.0));
        let out = reparam_sample(mu, ls, &mut rng).unwrap().value();
        for (o, m) in out.data().iter().zip(mu.value().data()) {
            assert!((o - m).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_statistics() {
        let g = Graph::new();
        let mut rng = Rng::seed(42);
        let n = 100_000;
        let mu = g.constant(Tensor::zeros([n]));
        let ls = g.constant(Tensor::zeros([n]));
        let out = reparam_sample(mu, ls, &mut rng).unwrap().value();
        let mean = out.sum() / n as f64;
        let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.98..=1.02).contains(&var.sqrt()), "std {}", var.sqrt());
    }

    #[test]
    fn gradient_with_respect_to_mean_is_one() {
        let g = Graph::new();
        let mut rng = Rng::seed(9);
        let mu = g.leaf(Tensor::from_slice(&[0.1, 0.2, 0.3, 0.4]));
        let ls = g.leaf(Tensor::from_slice(&[0.0, -1.0, 1.0, 0.5]));
        let out = reparam_sample(mu, ls, &mut rng).unwrap();
        let grads = g.grad(out.sum(), &[mu]).unwrap();
        assert_eq!(grads[0].data(), &[1.0; 4]);
    }
}
