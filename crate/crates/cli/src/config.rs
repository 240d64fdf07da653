//! Experiment configuration files.
//!
//! A config is a TOML document with a `schema_version` key. Unknown keys are
//! rejected so typos surface as errors instead of silently using defaults.
//! Every optional key falls back to a per-experiment default, see
//! [`ExperimentConfig::distill_config`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hard_core::diffcore::AdamConfig;
use hard_core::distill::{
    DistanceKind, DistillConfig, Thresholds, AFFINE_AUGMENTOR_LR, GENERATIVE_AUGMENTOR_LR, STUDENT_LR, TEMPERATURE,
    WEIGHT_DECAY,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Toy,
    Equivariance,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Toy => "toy",
            ExperimentKind::Equivariance => "equivariance",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaticKind {
    Mixup,
    Gaussian,
    RandomAffine,
    OracleShift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardKind {
    Gaussian,
    Affine,
    Mix,
    AffineMix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    TeacherOnly,
    StudentOnly,
    Kd,
    KdStatic(StaticKind),
    Hard(HardKind),
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let inner = |prefix: &str| t.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(str::trim);
        Ok(match t {
            "teacher_only" => Method::TeacherOnly,
            "student_only" => Method::StudentOnly,
            "kd" => Method::Kd,
            _ => {
                if let Some(k) = inner("kd+static(") {
                    Method::KdStatic(match k {
                        "mixup" => StaticKind::Mixup,
                        "gaussian" => StaticKind::Gaussian,
                        "random_affine" => StaticKind::RandomAffine,
                        "oracle_shift" => StaticKind::OracleShift,
                        _ => return Err(format!("unknown static augmentation `{k}`")),
                    })
                } else if let Some(k) = inner("hard(") {
                    Method::Hard(match k {
                        "gaussian" => HardKind::Gaussian,
                        "affine" => HardKind::Affine,
                        "mix" => HardKind::Mix,
                        "affine∘mix" | "affine+mix" => HardKind::AffineMix,
                        _ => return Err(format!("unknown augmentor `{k}`")),
                    })
                } else {
                    return Err(format!("unknown method `{t}`"));
                }
            }
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::TeacherOnly => f.write_str("teacher_only"),
            Method::StudentOnly => f.write_str("student_only"),
            Method::Kd => f.write_str("kd"),
            Method::KdStatic(k) => write!(
                f,
                "kd+static({})",
                match k {
                    StaticKind::Mixup => "mixup",
                    StaticKind::Gaussian => "gaussian",
                    StaticKind::RandomAffine => "random_affine",
                    StaticKind::OracleShift => "oracle_shift",
                }
            ),
            Method::Hard(k) => write!(
                f,
                "hard({})",
                match k {
                    HardKind::Gaussian => "gaussian",
                    HardKind::Affine => "affine",
                    HardKind::Mix => "mix",
                    HardKind::AffineMix => "affine∘mix",
                }
            ),
        }
    }
}

/// Overrides for [`DistillConfig`]; absent keys use the experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    pub lambda_s: Option<f64>,
    pub lambda_t: Option<f64>,
    pub ell_min: Option<f64>,
    pub ell_max: Option<f64>,
    pub patience: Option<usize>,
    pub temperature: Option<f64>,
    /// `kl` or `mse`.
    pub distance: Option<String>,
    pub student_lr: Option<f64>,
    pub augmentor_lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub iterations: Option<usize>,
    pub batch_size: Option<usize>,
    pub clean_fraction: Option<f64>,
    pub joint: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySection {
    pub n_train: usize,
    pub student_widths: [usize; 4],
    /// Standard deviation of the fixed-noise baseline.
    pub fixed_sigma: f64,
    /// Initial standard deviation of the learned Gaussian.
    pub initial_sigma: f64,
}

impl Default for ToySection {
    fn default() -> Self {
        Self {
            n_train: 40,
            student_widths: [1, 64, 64, 1],
            fixed_sigma: 1.0,
            initial_sigma: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// IDX files from `data_dir` or `HARD_DATA_DIR` when set, else sprites.
    Auto,
    Synthetic,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquivarianceSection {
    pub source: DataSource,
    pub data_dir: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub max_shift: usize,
    pub teacher_channels: [usize; 2],
    pub teacher_iterations: usize,
    pub teacher_lr: f64,
    pub teacher_batch_size: usize,
    pub student_widths: [usize; 4],
    /// Cadence of evaluations and rendered grids during HARD training.
    pub eval_every: usize,
    pub grid_samples: usize,
}

impl Default for EquivarianceSection {
    fn default() -> Self {
        Self {
            source: DataSource::Auto,
            data_dir: None,
            n_train: 10_000,
            n_test: 2_000,
            max_shift: 6,
            teacher_channels: [8, 16],
            teacher_iterations: 1_500,
            teacher_lr: 3e-3,
            teacher_batch_size: 32,
            student_widths: [784, 256, 256, 10],
            eval_every: 1_000,
            grid_samples: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub method: String,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub distill: DistillSection,
    #[serde(default)]
    pub toy: ToySection,
    #[serde(default)]
    pub equivariance: EquivarianceSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn field_error(field: &str, detail: impl fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {detail}"))
}

/// Byte offset to 1-based `(line, column)`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().replace('\n', " ");
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    CliError::Config(format!("{origin}:{line}:{col}: {msg}"))
                }
                None => CliError::Config(format!("{origin}: {msg}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn method(&self) -> CliResult<Method> {
        self.method.parse().map_err(|e| field_error("method", e))
    }

    pub fn distance(&self) -> CliResult<DistanceKind> {
        match self.distill.distance.as_deref() {
            None => Ok(match self.experiment {
                ExperimentKind::Toy => DistanceKind::Mse,
                ExperimentKind::Equivariance => DistanceKind::Kl,
            }),
            Some("kl") => Ok(DistanceKind::Kl),
            Some("mse") => Ok(DistanceKind::Mse),
            Some(other) => Err(field_error("distill.distance", format!("expected `kl` or `mse`, got `{other}`"))),
        }
    }

    /// Resolves the distillation settings for `seed`.
    ///
    /// Toy defaults use absolute MSE thresholds. Equivariance defaults follow
    /// the affine-augmentor settings (5% / 40%, batch 128); mix-based methods
    /// train jointly without the teacher-teacher term. On images, half of the
    /// student steps use clean batches.
    pub fn distill_config(&self, seed: u64) -> CliResult<DistillConfig> {
        let method = self.method()?;
        let d = &self.distill;
        let toy = self.experiment == ExperimentKind::Toy;
        let mixes = matches!(method, Method::Hard(HardKind::Mix | HardKind::AffineMix));
        let thresholds = Thresholds {
            ell_min: d.ell_min.unwrap_or(if toy { 0.01 } else { 0.05 }),
            ell_max: d.ell_max.unwrap_or(if toy { 0.1 } else { 0.40 }),
            patience: d.patience.unwrap_or(5),
        };
        let wd = d.weight_decay.unwrap_or(WEIGHT_DECAY);
        let adam = |lr| AdamConfig {
            weight_decay: wd,
            ..AdamConfig::with_lr(lr)
        };
        let aug_lr = match method {
            Method::Hard(HardKind::AffineMix) | Method::Hard(HardKind::Mix) => GENERATIVE_AUGMENTOR_LR,
            _ => AFFINE_AUGMENTOR_LR,
        };
        let cfg = DistillConfig {
            lambda_s: d.lambda_s.unwrap_or(1.0),
            lambda_t: d.lambda_t.unwrap_or(if mixes { 0.0 } else { 1.0 }),
            thresholds,
            temperature: d.temperature.unwrap_or(TEMPERATURE),
            distance: self.distance()?,
            student_opt: adam(d.student_lr.unwrap_or(if toy { 1e-3 } else { STUDENT_LR })),
            augmentor_opt: adam(d.augmentor_lr.unwrap_or(aug_lr)),
            iterations: d.iterations.unwrap_or(if toy { 10_000 } else { 20_000 }),
            batch_size: d.batch_size.unwrap_or(if toy { 32 } else { 128 }),
            clean_fraction: d.clean_fraction.unwrap_or(if toy { 0.0 } else { 0.5 }),
            joint: d.joint.unwrap_or(mixes),
            seed,
        };
        cfg.validate().map_err(|e| field_error("distill", e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field_error(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.seeds.is_empty() {
            return Err(field_error("seeds", "at least one seed is required"));
        }
        let method = self.method()?;
        let allowed = match self.experiment {
            ExperimentKind::Toy => matches!(
                method,
                Method::Kd
                    | Method::KdStatic(StaticKind::Mixup | StaticKind::Gaussian)
                    | Method::Hard(HardKind::Gaussian)
            ),
            ExperimentKind::Equivariance => !matches!(
                method,
                Method::KdStatic(StaticKind::Gaussian) | Method::Hard(HardKind::Gaussian)
            ),
        };
        if !allowed {
            return Err(field_error(
                "method",
                format!("`{method}` is not available for the {} experiment", self.experiment),
            ));
        }
        let cfg = self.distill_config(0)?;
        match self.experiment {
            ExperimentKind::Toy => {
                let t = &self.toy;
                if t.n_train < 10 {
                    return Err(field_error("toy.n_train", "must be at least 10"));
                }
                if t.student_widths[0] != 1 || t.student_widths[3] != 1 || t.student_widths.contains(&0) {
                    return Err(field_error("toy.student_widths", "must map 1 input to 1 output"));
                }
                for (name, v) in [("toy.fixed_sigma", t.fixed_sigma), ("toy.initial_sigma", t.initial_sigma)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(field_error(name, format!("must be positive, got {v}")));
                    }
                }
            }
            ExperimentKind::Equivariance => {
                let e = &self.equivariance;
                if e.n_train < 10 || e.n_test < 10 {
                    return Err(field_error("equivariance.n_train", "n_train and n_test must be at least 10"));
                }
                if e.max_shift > 13 {
                    return Err(field_error("equivariance.max_shift", "must leave part of a 28-pixel canvas"));
                }
                if e.student_widths[0] != 784 || e.student_widths[3] != 10 || e.student_widths.contains(&0) {
                    return Err(field_error("equivariance.student_widths", "must map 784 inputs to 10 classes"));
                }
                if e.teacher_channels.contains(&0) || e.teacher_batch_size == 0 || e.eval_every == 0 {
                    return Err(field_error("equivariance", "channels, batch size and eval_every must be positive"));
                }
                if self.equivariance.source == DataSource::Idx {
                    match &e.data_dir {
                        Some(dir) if dir.is_dir() => {}
                        Some(dir) => {
                            return Err(field_error(
                                "equivariance.data_dir",
                                format!("{} is not a directory", dir.display()),
                            ))
                        }
                        None if std::env::var_os("HARD_DATA_DIR").is_some() => {}
                        None => {
                            return Err(field_error(
                                "equivariance.data_dir",
                                "source = \"idx\" needs data_dir or HARD_DATA_DIR",
                            ))
                        }
                    }
                }
                if cfg.joint {
                    let tail = e.n_train % cfg.batch_size;
                    if cfg.batch_size % 2 != 0 || tail % 2 != 0 {
                        return Err(field_error(
                            "distill.batch_size",
                            "mix augmentors pair samples, so batch sizes must be even",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
