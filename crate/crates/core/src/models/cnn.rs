use super::{check_params, fan_in_uniform, Model};
use crate::diffcore::{Conv2dSpec, Rng, Tensor, Var};
use crate::error::{Error, Result};

/// Channel widths and padding for [`Cnn`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CnnConfig {
    pub in_channels: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub classes: usize,
    pub padding: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            conv1: 16,
            conv2: 32,
            classes: 10,
            padding: 1,
        }
    }
}

/// conv3x3 -> ReLU -> conv3x3 -> ReLU -> global average pool -> dense.
///
/// Global pooling makes the logits nearly invariant to translations of content
/// that stays away from the border.
#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    config: CnnConfig,
    params: Vec<Tensor>,
}

impl Cnn {
    pub fn new(config: CnnConfig, rng: &mut Rng) -> Result<Self> {
        let c = config;
        if [c.in_channels, c.conv1, c.conv2, c.classes].contains(&0) || c.padding > 1 {
            return Err(Error::invalid("Cnn::new", format!("{c:?}")));
        }
        let params = vec![
            fan_in_uniform([c.conv1, c.in_channels, 3, 3], c.in_channels * 9, rng),
            fan_in_uniform([c.conv1], c.in_channels * 9, rng),
            fan_in_uniform([c.conv2, c.conv1, 3, 3], c.conv1 * 9, rng),
            fan_in_uniform([c.conv2], c.conv1 * 9, rng),
            fan_in_uniform([c.conv2, c.classes], c.conv2, rng),
            fan_in_uniform([c.classes], c.conv2, rng),
        ];
        Ok(Self { config, params })
    }

    /// Builds from explicit `[k1, b1, k2, b2, fc_w, fc_b]`.
    pub fn from_params(config: CnnConfig, params: Vec<Tensor>) -> Result<Self> {
        let m = Self { config, params };
        check_params("Cnn::from_params", &m.param_specs(), &m.params)?;
        Ok(m)
    }

    pub fn config(&self) -> CnnConfig {
        self.config
    }
}

impl Model for Cnn {
    fn descriptor(&self) -> String {
        let c = self.config;
        format!(
            "cnn:{}-{}-{}-{}:pad{}",
            c.in_channels, c.conv1, c.conv2, c.classes, c.padding
        )
    }

    fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.config;
        vec![
            ("conv1.weight".into(), vec![c.conv1, c.in_channels, 3, 3]),
            ("conv1.bias".into(), vec![c.conv1]),
            ("conv2.weight".into(), vec![c.conv2, c.conv1, 3, 3]),
            ("conv2.bias".into(), vec![c.conv2]),
            ("fc.weight".into(), vec![c.conv2, c.classes]),
            ("fc.bias".into(), vec![c.classes]),
        ]
    }

    fn params(&self) -> &[Tensor] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    fn forward<'g>(&self, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
        if params.len() != 6 {
            return Err(Error::shape("cnn_forward", format!("{} parameter tensors", params.len())));
        }
        let s = x.shape();
        if s.len() != 4 || s[1] != self.config.in_channels || s[2] < 3 || s[3] < 3 {
            return Err(Error::shape(
                "cnn_forward",
                format!("input {s:?}, expected [B, {}, H>=3, W>=3]", self.config.in_channels),
            ));
        }
        let spec = Conv2dSpec {
            stride: 1,
            padding: self.config.padding,
        };
        let h = x.conv2d(params[0], params[1], spec)?.relu();
        let h = h.conv2d(params[2], params[3], spec)?.relu();
        h.global_avg_pool()?
            .matmul(params[4])?
            .add_row_vector(params[5])
    }
}
