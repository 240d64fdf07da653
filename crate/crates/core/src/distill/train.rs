use super::{
    augmentor_objective, monitored_metric, phase_step, teacher_student_loss, teacher_teacher_loss,
    AugmentorPool, DistillConfig, IterRecord, Phase, PhaseState, TrainLog,
};
use crate::augmentors::{mixup_batch, oracle_shift_baseline, random_affine_baseline, Augmentor, RandomAffineRanges};
use crate::data::BatchStream;
use crate::diffcore::{cross_entropy, Adam, AdamConfig, Graph, Rng, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::Model;

fn finite_scalar(v: Var<'_>, what: &str, iteration: usize) -> Result<f64> {
    let x = v.value().item()?;
    if !x.is_finite() {
        return Err(Error::NonFinite {
            what: format!("{what} at iteration {iteration}"),
        });
    }
    Ok(x)
}

/// One descent step on the student's parameters; returns the loss.
fn student_step<'g>(
    g: &'g Graph,
    student: &mut dyn Model,
    adam: &mut Adam,
    x: Var<'g>,
    teacher_out: Var<'g>,
    cfg: &DistillConfig,
    iteration: usize,
) -> Result<(f64, Tensor)> {
    let params = student.bind(g, true);
    let s = student.forward(&params, x)?;
    let loss = teacher_student_loss(s, teacher_out.detach(), cfg)?;
    let value = finite_scalar(loss, "teacher-student loss", iteration)?;
    let grads = g.grad(loss, &params)?;
    adam.step(student.params_mut().iter_mut().collect(), &grads)
        .map_err(|e| annotate(e, iteration))?;
    Ok((value, (*s.value()).clone()))
}

fn annotate(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { what } => Error::NonFinite {
            what: format!("{what} at iteration {iteration}"),
        },
        other => other,
    }
}

/// The alternating augmentor/student loop.
///
/// The trainer owns the live augmentor, the snapshot pool, the controller state
/// and the log. The student is passed to every step so callers can evaluate or
/// checkpoint it between steps; the teacher is only ever read.
pub struct HardTrainer<'a> {
    cfg: DistillConfig,
    teacher: &'a dyn Model,
    inputs: &'a Tensor,
    teacher_clean: Tensor,
    pub augmentor: Augmentor,
    pub pool: AugmentorPool,
    pub state: PhaseState,
    pub log: TrainLog,
    student_adam: Adam,
    augmentor_adam: Adam,
    batches: BatchStream,
    noise_rng: Rng,
    pool_rng: Rng,
    clean_rng: Rng,
    iteration: usize,
}

impl<'a> HardTrainer<'a> {
    pub fn new(cfg: DistillConfig, teacher: &'a dyn Model, inputs: &'a Tensor, augmentor: Augmentor) -> Result<Self> {
        cfg.validate()?;
        let teacher_clean = teacher.predict(inputs)?;
        let rows = inputs.shape().first().copied().unwrap_or(0);
        let mut root = Rng::seed(cfg.seed);
        let batches = BatchStream::new(rows, cfg.batch_size, root.fork())?;
        Ok(Self {
            teacher,
            inputs,
            teacher_clean,
            augmentor,
            pool: AugmentorPool::new(),
            state: PhaseState::default(),
            log: TrainLog::default(),
            student_adam: Adam::new(cfg.student_opt),
            augmentor_adam: Adam::new(cfg.augmentor_opt),
            batches,
            noise_rng: root.fork(),
            pool_rng: root.fork(),
            clean_rng: root.fork(),
            iteration: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &DistillConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Teacher outputs on the unaugmented inputs, computed once.
    pub fn teacher_clean(&self) -> &Tensor {
        &self.teacher_clean
    }

    /// One iteration of whichever phase is active (or one joint step).
    pub fn step(&mut self, student: &mut dyn Model) -> Result<()> {
        let idx = self.batches.next_batch();
        let x = self.inputs.select_rows(&idx)?;
        let t_clean = self.teacher_clean.select_rows(&idx)?;
        let record = if self.cfg.joint {
            self.joint_step(student, x, t_clean)?
        } else {
            match self.state.phase {
                Phase::TrainAugmentor => self.augmentor_step(student, x, t_clean)?,
                Phase::TrainStudent => self.pooled_student_step(student, x, t_clean)?,
            }
        };
        if !self.cfg.joint {
            let (next, switched) = phase_step(self.state, record.metric, &self.cfg.thresholds);
            self.state = next;
            if switched {
                self.pool.push(&self.augmentor);
                self.log.switches += 1;
            }
        }
        self.log.records.push(IterRecord {
            pool_size: self.pool.len(),
            ..record
        });
        self.iteration += 1;
        Ok(())
    }

    /// Runs `iterations` steps, calling `hook` after each one.
    pub fn run(
        &mut self,
        student: &mut dyn Model,
        iterations: usize,
        mut hook: impl FnMut(&Self, &dyn Model) -> Result<()>,
    ) -> Result<()> {
        for _ in 0..iterations {
            self.step(student)?;
            hook(self, student)?;
        }
        Ok(())
    }

    fn augmentor_ascent<'g>(
        &mut self,
        g: &'g Graph,
        student: &dyn Model,
        x: &Tensor,
        t_clean: &Tensor,
    ) -> Result<(f64, Option<f64>, f64)> {
        let it = self.iteration;
        let params = self.augmentor.bind(g, true);
        let x_aug = self.augmentor.forward(&params, g.constant(x.clone()), &mut self.noise_rng)?;
        let s = student.apply(x_aug)?;
        let t = self.teacher.apply(x_aug)?;
        let l_st = teacher_student_loss(s, t, &self.cfg)?;
        let l_tt = if self.cfg.lambda_t != 0.0 {
            Some(teacher_teacher_loss(t, g.constant(t_clean.clone()), &self.cfg)?)
        } else {
            None
        };
        let obj = augmentor_objective(l_st, l_tt, self.cfg.lambda_s, self.cfg.lambda_t)?;
        let st = finite_scalar(l_st, "teacher-student loss", it)?;
        let tt = l_tt.map(|l| finite_scalar(l, "teacher-teacher loss", it)).transpose()?;
        finite_scalar(obj, "augmentor objective", it)?;
        let grads = g.grad(obj.neg(), &params)?;
        self.augmentor_adam
            .step(self.augmentor.params_mut(), &grads)
            .map_err(|e| annotate(e, it))?;
        let metric = monitored_metric(&s.value(), &t.value(), self.cfg.distance)?;
        Ok((st, tt, metric))
    }

    fn augmentor_step(&mut self, student: &dyn Model, x: Tensor, t_clean: Tensor) -> Result<IterRecord> {
        let g = Graph::new();
        let (loss_st, loss_tt, metric) = self.augmentor_ascent(&g, student, &x, &t_clean)?;
        Ok(IterRecord {
            iteration: self.iteration,
            phase: "augmentor",
            loss_st,
            loss_tt,
            metric,
            pool_size: 0,
        })
    }

    fn pooled_student_step(&mut self, student: &mut dyn Model, x: Tensor, t_clean: Tensor) -> Result<IterRecord> {
        let g = Graph::new();
        let clean = self.cfg.clean_fraction > 0.0 && self.clean_rng.bernoulli(self.cfg.clean_fraction);
        let (x_aug, t_out) = if clean {
            (g.constant(x), g.constant(t_clean))
        } else {
            let aug = self.pool.sample(&mut self.pool_rng)?;
            let xa = aug.augment(g.constant(x), &mut self.noise_rng)?;
            (xa, self.teacher.apply(xa)?)
        };
        let (loss, s) = student_step(&g, student, &mut self.student_adam, x_aug, t_out, &self.cfg, self.iteration)?;
        Ok(IterRecord {
            iteration: self.iteration,
            phase: "student",
            loss_st: loss,
            loss_tt: None,
            metric: monitored_metric(&s, &t_out.value(), self.cfg.distance)?,
            pool_size: 0,
        })
    }

    /// Ascent on the augmentor, then descent on the student with a fresh draw
    /// from the updated augmentor, both on the same batch.
    fn joint_step(&mut self, student: &mut dyn Model, x: Tensor, t_clean: Tensor) -> Result<IterRecord> {
        let g = Graph::new();
        let (_, loss_tt, _) = self.augmentor_ascent(&g, student, &x, &t_clean)?;
        let g = Graph::new();
        let xa = self.augmentor.augment(g.constant(x), &mut self.noise_rng)?;
        let t_out = self.teacher.apply(xa)?;
        let (loss, s) = student_step(&g, student, &mut self.student_adam, xa, t_out, &self.cfg, self.iteration)?;
        Ok(IterRecord {
            iteration: self.iteration,
            phase: "joint",
            loss_st: loss,
            loss_tt,
            metric: monitored_metric(&s, &t_out.value(), self.cfg.distance)?,
            pool_size: 0,
        })
    }
}

/// Everything [`train_hard`] produces besides the trained student.
#[derive(Clone, Debug)]
pub struct HardOutcome {
    pub augmentor: Augmentor,
    pub pool: AugmentorPool,
    pub log: TrainLog,
}

/// Runs `cfg.iterations` steps of the alternating loop on `inputs`.
pub fn train_hard(
    cfg: &DistillConfig,
    teacher: &dyn Model,
    student: &mut dyn Model,
    augmentor: Augmentor,
    inputs: &Tensor,
) -> Result<HardOutcome> {
    let mut trainer = HardTrainer::new(cfg.clone(), teacher, inputs, augmentor)?;
    trainer.run(student, cfg.iterations, |_, _| Ok(()))?;
    Ok(HardOutcome {
        augmentor: trainer.augmentor,
        pool: trainer.pool,
        log: trainer.log,
    })
}

/// Fixed input transformations for plain distillation.
#[derive(Clone, Debug)]
pub enum StaticAugmentation {
    None,
    /// Pairs within the batch, `alpha ~ U[0, 1]`.
    Mixup,
    /// Any augmentor used with frozen parameters, e.g. fixed Gaussian noise.
    Frozen(Augmentor),
    RandomAffine(RandomAffineRanges),
    OracleShift(usize),
}

impl StaticAugmentation {
    pub fn apply(&self, x: &Tensor, rng: &mut Rng) -> Result<Option<Tensor>> {
        Ok(match self {
            StaticAugmentation::None => None,
            StaticAugmentation::Mixup => Some(mixup_batch(x, rng)?),
            StaticAugmentation::Frozen(a) => Some(a.augment_tensor(x, rng)?),
            StaticAugmentation::RandomAffine(r) => Some(random_affine_baseline(x, rng, r)?),
            StaticAugmentation::OracleShift(m) => Some(oracle_shift_baseline(x, rng, *m)?),
        })
    }
}

/// Plain distillation: the student descends the teacher-student loss on
/// (optionally statically augmented) batches.
pub fn distill_plain(
    cfg: &DistillConfig,
    teacher: &dyn Model,
    student: &mut dyn Model,
    inputs: &Tensor,
    augmentation: &StaticAugmentation,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    distill_plain_into(cfg, teacher, student, inputs, augmentation, &mut log)?;
    Ok(log)
}

/// [`distill_plain`] appending to `log`, which keeps every completed
/// iteration when a later one fails.
pub fn distill_plain_into(
    cfg: &DistillConfig,
    teacher: &dyn Model,
    student: &mut dyn Model,
    inputs: &Tensor,
    augmentation: &StaticAugmentation,
    log: &mut TrainLog,
) -> Result<()> {
    cfg.validate()?;
    if cfg.iterations == 0 {
        return Ok(());
    }
    let teacher_clean = teacher.predict(inputs)?;
    let mut root = Rng::seed(cfg.seed);
    let mut batches = BatchStream::new(inputs.shape()[0], cfg.batch_size, root.fork())?;
    let mut aug_rng = root.fork();
    let mut adam = Adam::new(cfg.student_opt);
    for iteration in 0..cfg.iterations {
        let idx = batches.next_batch();
        let x = inputs.select_rows(&idx)?;
        let g = Graph::new();
        let (x_in, t_out) = match augmentation.apply(&x, &mut aug_rng)? {
            None => (g.constant(x), g.constant(teacher_clean.select_rows(&idx)?)),
            Some(xa) => {
                let xa = g.constant(xa);
                (xa, teacher.apply(xa)?)
            }
        };
        let (loss, s) = student_step(&g, student, &mut adam, x_in, t_out, cfg, iteration)?;
        log.records.push(IterRecord {
            iteration,
            phase: "student",
            loss_st: loss,
            loss_tt: None,
            metric: monitored_metric(&s, &t_out.value(), cfg.distance)?,
            pool_size: 0,
        });
    }
    Ok(())
}

/// Supervised training settings for teachers and label-trained students.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            batch_size: 64,
            optimizer: AdamConfig::with_lr(1e-3),
            seed: 0,
        }
    }
}

/// Minimizes cross-entropy against integer labels; returns per-step losses.
pub fn fit_labels(model: &mut dyn Model, images: &Tensor, labels: &[usize], cfg: &FitConfig) -> Result<Vec<f64>> {
    if images.shape().first() != Some(&labels.len()) {
        return Err(Error::shape(
            "fit_labels",
            format!("{:?} images for {} labels", images.shape(), labels.len()),
        ));
    }
    let mut batches = BatchStream::new(labels.len(), cfg.batch_size, Rng::seed(cfg.seed))?;
    let mut adam = Adam::new(cfg.optimizer);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let idx = batches.next_batch();
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let g = Graph::new();
        let params = model.bind(&g, true);
        let logits = model.forward(&params, g.constant(images.select_rows(&idx)?))?;
        let loss = cross_entropy(logits, &y)?;
        losses.push(finite_scalar(loss, "cross-entropy", iteration)?);
        let grads = g.grad(loss, &params)?;
        adam.step(model.params_mut().iter_mut().collect(), &grads)
            .map_err(|e| annotate(e, iteration))?;
    }
    Ok(losses)
}

/// Fraction of rows whose argmax matches `labels`.
pub fn accuracy(model: &dyn Model, images: &Tensor, labels: &[usize]) -> Result<f64> {
    let pred = model.predict(images)?.argmax_rows()?;
    if pred.len() != labels.len() {
        return Err(Error::shape("accuracy", format!("{} predictions, {} labels", pred.len(), labels.len())));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Mean squared difference between two models' outputs on `x`.
pub fn output_mse(a: &dyn Model, b: &dyn Model, x: &Tensor) -> Result<f64> {
    let (ya, yb) = (a.predict(x)?, b.predict(x)?);
    if ya.shape() != yb.shape() {
        return Err(Error::shape("output_mse", format!("{:?} vs {:?}", ya.shape(), yb.shape())));
    }
    Ok(ya.data().iter().zip(yb.data()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / ya.len().max(1) as f64)
}
