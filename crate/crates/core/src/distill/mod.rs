//! Distillation losses, the phase controller, the augmentor pool and the
//! alternating training loop.

mod controller;
mod log;
mod losses;
mod train;

pub use controller::{phase_step, AugmentorPool, Phase, PhaseState, Thresholds};
pub use log::{EvalRecord, IterRecord, TrainLog, CSV_HEADER};
pub use losses::{augmentor_objective, monitored_metric, teacher_student_loss, teacher_teacher_loss};
pub use train::{
    accuracy, distill_plain, distill_plain_into, fit_labels, output_mse, train_hard, FitConfig, HardOutcome, HardTrainer,
    StaticAugmentation,
};

use crate::diffcore::AdamConfig;
use crate::error::{Error, Result};

/// How outputs are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceKind {
    /// Temperature-softened KL on logits; metric is argmax disagreement.
    Kl,
    /// Mean squared error on raw outputs; metric is batch MSE.
    Mse,
}

pub const STUDENT_LR: f64 = 3e-4;
pub const AFFINE_AUGMENTOR_LR: f64 = 5e-2;
pub const GENERATIVE_AUGMENTOR_LR: f64 = 1e-4;
pub const WEIGHT_DECAY: f64 = 2e-9;
pub const TEMPERATURE: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub thresholds: Thresholds,
    pub temperature: f64,
    pub distance: DistanceKind,
    pub student_opt: AdamConfig,
    pub augmentor_opt: AdamConfig,
    pub iterations: usize,
    pub batch_size: usize,
    /// Share of student steps that use unaugmented inputs.
    pub clean_fraction: f64,
    /// Mix mode: one ascent and one descent per batch, no controller.
    pub joint: bool,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        let adam = |lr| AdamConfig {
            weight_decay: WEIGHT_DECAY,
            ..AdamConfig::with_lr(lr)
        };
        Self {
            lambda_s: 1.0,
            lambda_t: 1.0,
            thresholds: Thresholds::default(),
            temperature: TEMPERATURE,
            distance: DistanceKind::Kl,
            student_opt: adam(STUDENT_LR),
            augmentor_opt: adam(AFFINE_AUGMENTOR_LR),
            iterations: 10_000,
            batch_size: 64,
            clean_fraction: 0.0,
            joint: false,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::invalid("DistillConfig", what));
        if !(self.lambda_s >= 0.0 && self.lambda_t >= 0.0) || !self.lambda_s.is_finite() || !self.lambda_t.is_finite() {
            return bad(format!("lambda_s {}, lambda_t {}", self.lambda_s, self.lambda_t));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.clean_fraction) {
            return bad(format!("clean_fraction {}", self.clean_fraction));
        }
        if self.batch_size == 0 {
            return bad("batch_size 0".into());
        }
        self.thresholds.validate()?;
        self.student_opt.validate()?;
        self.augmentor_opt.validate()
    }
}
