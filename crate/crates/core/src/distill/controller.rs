use std::fmt;

use crate::augmentors::Augmentor;
use crate::diffcore::Rng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    TrainStudent,
    TrainAugmentor,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::TrainStudent => "student",
            Phase::TrainAugmentor => "augmentor",
        })
    }
}

/// Switching thresholds on the monitored metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub ell_min: f64,
    pub ell_max: f64,
    pub patience: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ell_min: 0.10,
            ell_max: 0.60,
            patience: 5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.ell_min && self.ell_min < self.ell_max) || self.patience == 0 || self.ell_min.is_nan() {
            return Err(Error::invalid("Thresholds", format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub phase: Phase,
    pub counter: usize,
    pub last_metric: Option<f64>,
}

impl Default for PhaseState {
    /// Training starts by hardening the augmentor against the fresh student.
    fn default() -> Self {
        Self {
            phase: Phase::TrainAugmentor,
            counter: 0,
            last_metric: None,
        }
    }
}

/// Advances the controller by one observed metric. Returns the new state and
/// whether the phase flipped.
///
/// The augmentor phase ends after `patience` consecutive metrics above
/// `ell_max`; the student phase ends after `patience` consecutive metrics below
/// `ell_min`. Any miss resets the count.
pub fn phase_step(state: PhaseState, metric: f64, th: &Thresholds) -> (PhaseState, bool) {
    let holds = match state.phase {
        Phase::TrainAugmentor => metric > th.ell_max,
        Phase::TrainStudent => metric < th.ell_min,
    };
    let mut next = PhaseState {
        last_metric: Some(metric),
        counter: if holds { state.counter + 1 } else { 0 },
        ..state
    };
    if next.counter >= th.patience {
        next.phase = match state.phase {
            Phase::TrainAugmentor => Phase::TrainStudent,
            Phase::TrainStudent => Phase::TrainAugmentor,
        };
        next.counter = 0;
        return (next, true);
    }
    (next, false)
}

/// Frozen augmentor snapshots, one per phase switch.
#[derive(Clone, Debug, Default)]
pub struct AugmentorPool {
    snapshots: Vec<Augmentor>,
}

impl AugmentorPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, live: &Augmentor) {
        self.snapshots.push(live.clone());
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<&Augmentor> {
        if self.snapshots.is_empty() {
            return Err(Error::EmptyPool);
        }
        Ok(&self.snapshots[rng.below(self.snapshots.len())])
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Augmentor] {
        &self.snapshots
    }
}
