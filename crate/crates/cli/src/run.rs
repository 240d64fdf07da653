//! Executes an [`ExperimentConfig`] seed by seed and writes its artifacts.
//!
//! Layout of the output directory:
//!
//! ```text
//! summary.json            deterministic ResultSummary
//! timing.json             wall-clock seconds (kept apart so summaries stay byte-stable)
//! seed_<s>/train_log.csv  per-iteration TrainLog
//! seed_<s>/evals.csv      periodic held-out metrics
//! seed_<s>/*.ckpt         student, teacher and augmentor checkpoints
//! seed_<s>/grid_<i>.png   augmented training images every `eval_every` iterations
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use hard_core::augmentors::{AffineAug, Augmentor, GaussianAug, MixAug, RandomAffineRanges};
use hard_core::data::{load_mnist_dir, make_toy_dataset, shift_dataset, synth_shapes, DigitDataset, ShiftSpec};
use hard_core::diffcore::{Rng, Tensor};
use hard_core::distill::{
    accuracy, distill_plain_into, fit_labels, output_mse, DistillConfig, EvalRecord, FitConfig, HardTrainer,
    StaticAugmentation, TrainLog,
};
use hard_core::models::{cos_teacher, Cnn, CnnConfig, CosTeacher, Mlp, Model};
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig, ExperimentKind, HardKind, Method, StaticKind};
use crate::error::{CliError, CliResult};
use crate::render::render_grid;
use crate::summary::{ResultSummary, SeedResult};

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads for independent seeds; 0 or 1 runs them in order.
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: ResultSummary,
    pub out_dir: PathBuf,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    threads: usize,
    seed_seconds: BTreeMap<u64, f64>,
}

const STUDENT_INIT: u64 = 0x5EED_0001;
const TEACHER_INIT: u64 = 0x5EED_0002;
const AUGMENTOR_INIT: u64 = 0x5EED_0003;
const TEST_SET: u64 = 0x5EED_0004;
const TEST_SHIFTS: u64 = 0x5EED_0005;
const GRID_NOISE: u64 = 0x5EED_0006;

const TOY_EVAL_EVERY: usize = 1000;

/// Independent stream per `(seed, purpose)`.
fn stream(seed: u64, purpose: u64) -> Rng {
    Rng::seed(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> CliResult<RunOutcome> {
    let mut cfg = config.clone();
    if let Some(seeds) = &opts.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(dir) = &opts.out_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let start = Instant::now();
    let results = run_seeds(&cfg, &out, opts.threads.max(1));
    let mut seeds = Vec::with_capacity(results.len());
    let mut seed_seconds = BTreeMap::new();
    for r in results {
        let (res, secs) = r?;
        seed_seconds.insert(res.seed, secs);
        seeds.push(res);
    }
    // The recorded config keeps the file's output_dir so reruns elsewhere match.
    let recorded = ExperimentConfig {
        output_dir: config.output_dir.clone(),
        ..cfg.clone()
    };
    let summary = ResultSummary::new(&recorded, data_source(&cfg), seeds);
    write(&out.join("summary.json"), summary.to_json())?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let timing = Timing {
        wall_seconds,
        threads: opts.threads.max(1),
        seed_seconds,
    };
    write(
        &out.join("timing.json"),
        serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n",
    )?;
    Ok(RunOutcome {
        summary,
        out_dir: out,
        wall_seconds,
    })
}

/// Results come back in seed order whatever the thread count.
fn run_seeds(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Vec<CliResult<(SeedResult, f64)>> {
    let n = cfg.seeds.len();
    let slots: Mutex<Vec<Option<CliResult<(SeedResult, f64)>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= n {
            break;
        }
        let seed = cfg.seeds[i];
        let t = Instant::now();
        let r = run_seed(cfg, seed, &out.join(format!("seed_{seed}"))).map(|s| (s, t.elapsed().as_secs_f64()));
        slots.lock().expect("no worker panicked")[i] = Some(r);
    };
    if threads <= 1 || n <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads.min(n) {
                s.spawn(work);
            }
        });
    }
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

/// Turns a non-finite failure into an exit-3 error after saving the partial log.
fn finish(result: hard_core::Result<()>, log: &TrainLog, dir: &Path) -> CliResult<()> {
    let path = dir.join("train_log.csv");
    write(&path, log.to_csv())?;
    write(&dir.join("evals.csv"), log.evals_csv())?;
    match result {
        Ok(()) => Ok(()),
        Err(hard_core::Error::NonFinite { what }) => Err(CliError::NonFinite {
            message: format!("non-finite value in {what}"),
            log: path,
        }),
        Err(e) => Err(e.into()),
    }
}

fn save(model_ck: hard_core::models::Checkpoint, path: &Path) -> CliResult<()> {
    write(path, model_ck.encode())
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> CliResult<SeedResult> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    match cfg.experiment {
        ExperimentKind::Toy => run_toy(cfg, seed, dir),
        ExperimentKind::Equivariance => run_equivariance(cfg, seed, dir),
    }
}

/// Mean over `draws` augmentations of `MSE(cos(x~), cos(x))`.
pub fn teacher_invariance_loss(aug: &Augmentor, x: &Tensor, draws: usize, seed: u64) -> CliResult<f64> {
    let mut rng = Rng::seed(seed);
    let clean = cos_teacher(x);
    let mut total = 0.0;
    for _ in 0..draws {
        let t = cos_teacher(&aug.augment_tensor(x, &mut rng)?);
        total += t.data().iter().zip(clean.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    }
    Ok(total / draws as f64)
}

fn run_toy(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> CliResult<SeedResult> {
    let method = cfg.method()?;
    let dc = cfg.distill_config(seed)?;
    let data = make_toy_dataset(seed, cfg.toy.n_train)?;
    let mut student = Mlp::new(cfg.toy.student_widths, &mut stream(seed, STUDENT_INIT))?;
    let mut metrics = BTreeMap::new();
    let mut log = TrainLog::default();
    let mut switches = 0;
    match method {
        Method::Hard(HardKind::Gaussian) => {
            let aug = Augmentor::Gaussian(GaussianAug::new(1, 0.0, cfg.toy.initial_sigma)?);
            let mut trainer = HardTrainer::new(dc.clone(), &CosTeacher, &data.train, aug)?;
            let mut evals = Vec::new();
            let result = trainer.run(&mut student, dc.iterations, |t, s| {
                if t.iteration() % TOY_EVAL_EVERY == 0 {
                    evals.push(EvalRecord {
                        iteration: t.iteration(),
                        name: "test_mse".into(),
                        value: output_mse(s, &CosTeacher, &data.test)?,
                    });
                }
                Ok(())
            });
            trainer.log.evals = evals;
            finish(result, &trainer.log, dir)?;
            metrics.insert(
                "augmentor_tt_loss".to_string(),
                teacher_invariance_loss(&trainer.augmentor, &data.train, 1000, seed)?,
            );
            log = std::mem::take(&mut trainer.log);
            switches = log.switches;
            save(trainer.augmentor.checkpoint(), &dir.join("augmentor.ckpt"))?;
        }
        _ => {
            let aug = match method {
                Method::Kd => StaticAugmentation::None,
                Method::KdStatic(StaticKind::Mixup) => StaticAugmentation::Mixup,
                Method::KdStatic(StaticKind::Gaussian) => {
                    StaticAugmentation::Frozen(Augmentor::Gaussian(GaussianAug::new(1, 0.0, cfg.toy.fixed_sigma)?))
                }
                other => return Err(CliError::Config(format!("field `method`: `{other}` is not a toy method"))),
            };
            let result = distill_plain_into(&dc, &CosTeacher, &mut student, &data.train, &aug, &mut log);
            finish(result, &log, dir)?;
        }
    }
    metrics.insert("mse".to_string(), output_mse(&student, &CosTeacher, &data.test)?);
    save(student.checkpoint(), &dir.join("student.ckpt"))?;
    Ok(SeedResult {
        seed,
        metrics,
        switches,
        iterations: log.records.len(),
    })
}

fn digits(cfg: &ExperimentConfig, seed: u64) -> CliResult<(DigitDataset, DigitDataset)> {
    let e = &cfg.equivariance;
    let dir = e
        .data_dir
        .clone()
        .or_else(|| std::env::var_os("HARD_DATA_DIR").map(PathBuf::from));
    let synthetic = || -> CliResult<_> {
        Ok((synth_shapes(e.n_train, seed)?, synth_shapes(e.n_test, seed ^ TEST_SET)?))
    };
    match (e.source, dir) {
        (DataSource::Synthetic, _) | (DataSource::Auto, None) => synthetic(),
        (_, Some(dir)) => Ok((
            load_mnist_dir(&dir, "train")?.take(e.n_train)?,
            load_mnist_dir(&dir, "test")?.take(e.n_test)?,
        )),
        (DataSource::Idx, None) => Err(CliError::Config(
            "field `equivariance.data_dir`: source = \"idx\" needs data_dir or HARD_DATA_DIR".into(),
        )),
    }
}

/// Where the equivariance data came from: `synthetic` or `idx:<dir>`.
pub fn data_source(cfg: &ExperimentConfig) -> String {
    let e = &cfg.equivariance;
    let dir = e
        .data_dir
        .clone()
        .or_else(|| std::env::var_os("HARD_DATA_DIR").map(PathBuf::from));
    match (cfg.experiment, e.source, dir) {
        (ExperimentKind::Toy, _, _) => "toy".into(),
        (_, DataSource::Synthetic, _) | (_, DataSource::Auto, None) => "synthetic".into(),
        (_, _, Some(d)) => format!("idx:{}", d.display()),
        (_, DataSource::Idx, None) => "idx".into(),
    }
}

pub fn train_teacher(cfg: &ExperimentConfig, seed: u64, train: &DigitDataset) -> CliResult<Cnn> {
    let e = &cfg.equivariance;
    let config = CnnConfig {
        conv1: e.teacher_channels[0],
        conv2: e.teacher_channels[1],
        ..CnnConfig::default()
    };
    let mut teacher = Cnn::new(config, &mut stream(seed, TEACHER_INIT))?;
    let fit = FitConfig {
        iterations: e.teacher_iterations,
        batch_size: e.teacher_batch_size,
        optimizer: hard_core::diffcore::AdamConfig::with_lr(e.teacher_lr),
        seed,
    };
    fit_labels(&mut teacher, &train.images, &train.labels, &fit)?;
    Ok(teacher)
}

fn hard_augmentor(kind: HardKind, channels: usize, seed: u64) -> CliResult<Augmentor> {
    let mut rng = stream(seed, AUGMENTOR_INIT);
    Ok(match kind {
        HardKind::Affine => Augmentor::Affine(AffineAug::default()),
        HardKind::Mix => Augmentor::Mix(MixAug::with_defaults(channels, &mut rng)?),
        HardKind::AffineMix => Augmentor::Composed(
            Box::new(Augmentor::Mix(MixAug::with_defaults(channels, &mut rng)?)),
            AffineAug::default(),
        ),
        HardKind::Gaussian => {
            return Err(CliError::Config("field `method`: hard(gaussian) is a toy method".into()));
        }
    })
}

struct EvalSets<'a> {
    centered: &'a DigitDataset,
    shifted: &'a Tensor,
}

impl EvalSets<'_> {
    fn accuracies(&self, m: &dyn Model) -> hard_core::Result<(f64, f64)> {
        Ok((
            accuracy(m, &self.centered.images, &self.centered.labels)?,
            accuracy(m, self.shifted, &self.centered.labels)?,
        ))
    }
}

fn run_equivariance(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> CliResult<SeedResult> {
    let e = &cfg.equivariance;
    let method = cfg.method()?;
    let dc: DistillConfig = cfg.distill_config(seed)?;
    let (train, test) = digits(cfg, seed)?;
    let shifted = shift_dataset(
        &test.images,
        ShiftSpec {
            max_shift: e.max_shift,
            seed: seed ^ TEST_SHIFTS,
        },
    )?;
    let sets = EvalSets {
        centered: &test,
        shifted: &shifted,
    };
    let teacher = train_teacher(cfg, seed, &train)?;
    save(teacher.checkpoint(), &dir.join("teacher.ckpt"))?;
    let (tc, ts) = sets.accuracies(&teacher)?;
    let mut metrics = BTreeMap::from([
        ("teacher_centered_accuracy".to_string(), tc),
        ("teacher_shifted_accuracy".to_string(), ts),
    ]);
    let mut student = Mlp::new(e.student_widths, &mut stream(seed, STUDENT_INIT))?;
    let mut log = TrainLog::default();
    let channels = train.images.shape()[1];
    match method {
        Method::TeacherOnly => {
            finish(Ok(()), &log, dir)?;
            metrics.insert("centered_accuracy".into(), tc);
            metrics.insert("shifted_accuracy".into(), ts);
            return Ok(SeedResult {
                seed,
                metrics,
                switches: 0,
                iterations: 0,
            });
        }
        Method::StudentOnly => {
            let fit = FitConfig {
                iterations: dc.iterations,
                batch_size: dc.batch_size,
                optimizer: dc.student_opt,
                seed,
            };
            let result = fit_labels(&mut student, &train.images, &train.labels, &fit).map(|_| ());
            finish(result, &log, dir)?;
        }
        Method::Kd | Method::KdStatic(_) => {
            let aug = match method {
                Method::KdStatic(StaticKind::Mixup) => StaticAugmentation::Mixup,
                Method::KdStatic(StaticKind::RandomAffine) => {
                    StaticAugmentation::RandomAffine(RandomAffineRanges::defaults_for(train.images.shape()[3]))
                }
                Method::KdStatic(StaticKind::OracleShift) => StaticAugmentation::OracleShift(e.max_shift),
                _ => StaticAugmentation::None,
            };
            let result = distill_plain_into(&dc, &teacher, &mut student, &train.images, &aug, &mut log);
            finish(result, &log, dir)?;
        }
        Method::Hard(kind) => {
            let aug = hard_augmentor(kind, channels, seed)?;
            let grid_src = train.images.select_rows(&(0..e.grid_samples.min(train.len())).collect::<Vec<_>>())?;
            let mut trainer = HardTrainer::new(dc.clone(), &teacher, &train.images, aug)?;
            let mut evals = Vec::new();
            let result = trainer.run(&mut student, dc.iterations, |t, s| {
                let it = t.iteration();
                if it % e.eval_every == 0 {
                    let (c, sh) = sets.accuracies(s)?;
                    evals.push(EvalRecord { iteration: it, name: "centered_accuracy".into(), value: c });
                    evals.push(EvalRecord { iteration: it, name: "shifted_accuracy".into(), value: sh });
                    let img = t.augmentor.augment_tensor(&grid_src, &mut stream(seed, GRID_NOISE))?;
                    render_grid(&img, &dir.join(format!("grid_{it:06}.png")))
                        .map_err(|err| hard_core::Error::Io(std::io::Error::other(err.to_string())))?;
                }
                Ok(())
            });
            trainer.log.evals = evals;
            finish(result, &trainer.log, dir)?;
            save(trainer.augmentor.checkpoint(), &dir.join("augmentor.ckpt"))?;
            log = std::mem::take(&mut trainer.log);
        }
    }
    let (c, s) = sets.accuracies(&student)?;
    metrics.insert("centered_accuracy".into(), c);
    metrics.insert("shifted_accuracy".into(), s);
    save(student.checkpoint(), &dir.join("student.ckpt"))?;
    Ok(SeedResult {
        seed,
        metrics,
        switches: log.switches,
        iterations: log.records.len(),
    })
}
