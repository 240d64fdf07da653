use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient; `weight_decay * param` is added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("adam", format!("invalid settings {self:?}")))
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        Self {
            second: first.clone(),
            first,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient is
/// non-finite or shapes disagree.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.first.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
        if !g.all_finite() {
            let bad = g.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite {
                what: format!(
                    "gradient of parameter {i} (shape {:?}), entry {bad} = {}",
                    g.shape(),
                    g.data()[bad]
                ),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        let pd = p.data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            let gk = gk + cfg.weight_decay * pd[k];
            let mk = &mut m.data_mut()[k];
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
            let vk = &mut v.data_mut()[k];
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m.data()[k] / bc1;
            let v_hat = v.data()[k] / bc2;
            pd[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Adam optimizer owning its state; the state is created on the first step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    state: Option<AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, state: None }
    }

    pub fn state(&self) -> Option<&AdamState> {
        self.state.as_ref()
    }

    pub fn step(&mut self, mut params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        let state = self
            .state
            .get_or_insert_with(|| AdamState::new(params.iter().map(|p| &**p)));
        adam_step(&mut params, grads, state, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar Adam written out directly.
    fn reference(p0: f64, grads: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        let mut traj = Vec::new();
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            traj.push(p);
        }
        traj
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_slice(&[1.0, -2.0]);
        let mut state = AdamState::new([&p]);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut [&mut p], &[Tensor::zeros([2])], &mut state, &cfg).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::from_slice(&[0.0]);
        let mut state = AdamState::new([&p]);
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut [&mut p], &[Tensor::from_slice(&[1.0])], &mut state, &cfg).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn five_step_trajectory_matches_reference() {
        let grads = [0.3, -1.2, 0.7, 2.0, -0.05];
        let expected = reference(0.25, &grads, 0.01);
        let mut p = Tensor::from_slice(&[0.25]);
        let mut opt = Adam::new(AdamConfig::with_lr(0.01));
        for (g, e) in grads.iter().zip(&expected) {
            opt.step(vec![&mut p], &[Tensor::from_slice(&[*g])]).unwrap();
            assert!((p.data()[0] - e).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = Tensor::from_slice(&[1.0, 2.0]);
        let mut state = AdamState::new([&p]);
        let err = adam_step(
            &mut [&mut p],
            &[Tensor::from_slice(&[0.5, f64::NAN])],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("entry 1"), "{err}");
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(state.step(), 0);
    }

    #[test]
    fn weight_decay_enters_gradient() {
        // With zero gradient, decay alone produces a first step of size lr toward zero.
        let mut p = Tensor::from_slice(&[3.0]);
        let mut state = AdamState::new([&p]);
        let cfg = AdamConfig {
            weight_decay: 0.1,
            ..AdamConfig::with_lr(0.01)
        };
        adam_step(&mut [&mut p], &[Tensor::zeros([1])], &mut state, &cfg).unwrap();
        assert!((p.data()[0] - 2.99).abs() < 1e-6);
    }
}
