use hard_core::augmentors::{AffineAug, Augmentor, GaussianAug};
use hard_core::data::make_toy_dataset;
use hard_core::diffcore::{Adam, AdamConfig, Graph, Rng, Tensor};
use hard_core::distill::{
    augmentor_objective, distill_plain, phase_step, teacher_student_loss, teacher_teacher_loss, train_hard,
    DistanceKind, DistillConfig, HardTrainer, Phase, PhaseState, StaticAugmentation, Thresholds,
};
use hard_core::models::{CosTeacher, Mlp, Model};
use hard_core::Error;

fn toy_cfg(iterations: usize, seed: u64) -> DistillConfig {
    DistillConfig {
        distance: DistanceKind::Mse,
        thresholds: Thresholds { ell_min: 0.01, ell_max: 0.1, patience: 5 },
        student_opt: AdamConfig::with_lr(1e-3),
        iterations,
        batch_size: 16,
        seed,
        ..DistillConfig::default()
    }
}

fn gaussian() -> Augmentor {
    Augmentor::Gaussian(GaussianAug::new(1, 0.0, 1e-3).unwrap())
}

/// Scripted reference: walks the stream keeping an explicit run length of
/// qualifying metrics for the current phase.
fn reference_phases(start_aug: bool, stream: &[f64], lo: f64, hi: f64, patience: usize) -> Vec<(bool, bool)> {
    let mut in_aug = start_aug;
    let mut run = 0;
    let mut out = Vec::new();
    for &m in stream {
        let ok = if in_aug { m > hi } else { m < lo };
        run = if ok { run + 1 } else { 0 };
        let flip = run == patience;
        if flip {
            in_aug = !in_aug;
            run = 0;
        }
        out.push((in_aug, flip));
    }
    out
}

#[test]
fn controller_matches_scripted_reference() {
    let mut rng = Rng::seed(2024);
    for i in 0..1000 {
        // every other stream uses one of the default threshold settings
        let th = if i % 2 == 0 {
            let k = (i / 2) % 8;
            Thresholds {
                ell_min: [0.05, 0.10][k & 1],
                ell_max: [0.40, 0.60][(k >> 1) & 1],
                patience: [5, 10][k >> 2],
            }
        } else {
            let lo = rng.uniform(0.0, 0.5);
            Thresholds { ell_min: lo, ell_max: lo + rng.uniform(0.01, 0.5), patience: 1 + rng.below(6) }
        };
        let (lo, hi) = (th.ell_min, th.ell_max);
        let len = 1 + rng.below(200);
        let stream: Vec<f64> = (0..len).map(|_| rng.uniform(0.0, 1.0)).collect();
        let expected = reference_phases(true, &stream, lo, hi, th.patience);
        let mut s = PhaseState::default();
        for (m, &(in_aug, flip)) in stream.iter().zip(&expected) {
            let (next, switched) = phase_step(s, *m, &th);
            assert_eq!((next.phase == Phase::TrainAugmentor, switched), (in_aug, flip));
            assert!(next.counter < th.patience);
            s = next;
        }
    }
}

#[test]
fn identical_seeds_reproduce_the_log() {
    let data = make_toy_dataset(3, 40).unwrap();
    let run = || {
        let mut s = Mlp::new([1, 16, 16, 1], &mut Rng::seed(5)).unwrap();
        let out = train_hard(&toy_cfg(400, 11), &CosTeacher, &mut s, gaussian(), &data.train).unwrap();
        (s, out)
    };
    let (s1, o1) = run();
    let (s2, o2) = run();
    assert_eq!(o1.log, o2.log);
    assert_eq!(o1.log.to_csv(), o2.log.to_csv());
    assert_eq!(s1.params(), s2.params());
    assert_eq!(o1.augmentor, o2.augmentor);
    assert!(o1.log.switches > 0);
}

#[test]
fn teacher_is_never_modified() {
    let mut rng = Rng::seed(1);
    let teacher = Mlp::new([1, 8, 8, 1], &mut rng).unwrap();
    let before = teacher.params().to_vec();
    let data = make_toy_dataset(0, 40).unwrap();
    let mut student = Mlp::new([1, 8, 8, 1], &mut rng).unwrap();
    train_hard(&toy_cfg(200, 0), &teacher, &mut student, gaussian(), &data.train).unwrap();
    distill_plain(&toy_cfg(50, 0), &teacher, &mut student, &data.train, &StaticAugmentation::Mixup).unwrap();
    assert_eq!(teacher.params(), &before[..]);
}

#[test]
fn each_phase_touches_only_its_own_parameters() {
    let data = make_toy_dataset(1, 40).unwrap();
    let mut student = Mlp::new([1, 16, 16, 1], &mut Rng::seed(2)).unwrap();
    let mut trainer = HardTrainer::new(toy_cfg(0, 4), &CosTeacher, &data.train, gaussian()).unwrap();
    let mut seen = [0usize; 2];
    for _ in 0..600 {
        let phase = trainer.state.phase;
        let (s0, a0) = (student.params().to_vec(), trainer.augmentor.clone());
        let switches = trainer.log.switches;
        trainer.step(&mut student).unwrap();
        match phase {
            Phase::TrainAugmentor => {
                seen[0] += 1;
                assert_eq!(student.params(), &s0[..]);
            }
            Phase::TrainStudent => {
                seen[1] += 1;
                assert_eq!(trainer.augmentor, a0);
            }
        }
        assert_eq!(trainer.pool.len(), trainer.log.switches);
        if trainer.log.switches > switches {
            assert_eq!(trainer.pool.snapshots().last(), Some(&trainer.augmentor));
        }
    }
    assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
}

#[test]
fn pooled_snapshots_stay_frozen() {
    let data = make_toy_dataset(2, 40).unwrap();
    let mut student = Mlp::new([1, 16, 16, 1], &mut Rng::seed(3)).unwrap();
    let mut trainer = HardTrainer::new(toy_cfg(0, 5), &CosTeacher, &data.train, gaussian()).unwrap();
    let mut frozen = Vec::new();
    for _ in 0..800 {
        trainer.step(&mut student).unwrap();
        if trainer.pool.len() > frozen.len() {
            frozen.push(trainer.pool.snapshots().last().unwrap().clone());
        }
        assert_eq!(trainer.pool.snapshots(), &frozen[..]);
    }
}

/// One small Adam step on the augmentor, with frozen noise, does not lower the
/// objective.
#[test]
fn augmentor_step_ascends_the_objective() {
    let cfg = toy_cfg(0, 0);
    let data = make_toy_dataset(7, 40).unwrap();
    for state in 0..10u64 {
        let mut rng = Rng::seed(300 + state);
        let student = Mlp::new([1, 16, 16, 1], &mut rng).unwrap();
        let mut aug = Augmentor::Gaussian(
            GaussianAug::new(1, rng.uniform(-2.0, 2.0), rng.uniform(0.1, 1.5)).unwrap(),
        );
        let objective = |aug: &Augmentor| {
            let g = Graph::new();
            let params = aug.bind(&g, true);
            let x = g.constant(data.train.clone());
            let xa = aug.forward(&params, x, &mut Rng::seed(state)).unwrap();
            let t = CosTeacher.apply(xa).unwrap();
            let l_st = teacher_student_loss(student.apply(xa).unwrap(), t, &cfg).unwrap();
            let l_tt = teacher_teacher_loss(t, CosTeacher.apply(x).unwrap(), &cfg).unwrap();
            let obj = augmentor_objective(l_st, Some(l_tt), 1.0, 1.0).unwrap();
            let grads = g.grad(obj.neg(), &params).unwrap();
            (obj.value().item().unwrap(), grads)
        };
        let (before, grads) = objective(&aug);
        Adam::new(AdamConfig::with_lr(1e-4)).step(aug.params_mut(), &grads).unwrap();
        let (after, _) = objective(&aug);
        assert!(after >= before, "state {state}: {before} -> {after}");
    }
}

#[test]
fn zero_iterations_leave_everything_unchanged() {
    let data = make_toy_dataset(0, 40).unwrap();
    let mut student = Mlp::new([1, 8, 8, 1], &mut Rng::seed(0)).unwrap();
    let before = student.clone();
    let aug = Augmentor::Affine(AffineAug::default());
    let out = train_hard(&toy_cfg(0, 0), &CosTeacher, &mut student, gaussian(), &data.train).unwrap();
    assert_eq!(student, before);
    assert_eq!(out.augmentor, gaussian());
    assert!(out.pool.is_empty() && out.log.records.is_empty());
    let log = distill_plain(&toy_cfg(0, 0), &CosTeacher, &mut student, &data.train, &StaticAugmentation::Frozen(aug)).unwrap();
    assert!(log.records.is_empty());
    assert_eq!(student, before);
}

#[test]
fn infinite_ceiling_means_no_student_updates() {
    let data = make_toy_dataset(0, 40).unwrap();
    let mut cfg = toy_cfg(300, 0);
    cfg.thresholds.ell_max = f64::INFINITY;
    let mut student = Mlp::new([1, 8, 8, 1], &mut Rng::seed(0)).unwrap();
    let before = student.clone();
    let out = train_hard(&cfg, &CosTeacher, &mut student, gaussian(), &data.train).unwrap();
    assert_eq!(out.log.student_updates(), 0);
    assert_eq!(out.log.augmentor_updates(), 300);
    assert_eq!((out.log.switches, out.pool.len()), (0, 0));
    assert_eq!(student, before);
}

#[test]
fn log_is_monotone_and_finite() {
    let data = make_toy_dataset(4, 40).unwrap();
    let mut student = Mlp::new([1, 16, 16, 1], &mut Rng::seed(4)).unwrap();
    let out = train_hard(&toy_cfg(500, 4), &CosTeacher, &mut student, gaussian(), &data.train).unwrap();
    for (i, r) in out.log.records.iter().enumerate() {
        assert_eq!(r.iteration, i);
        assert!(r.loss_st.is_finite() && r.metric.is_finite());
        assert_eq!(r.loss_tt.is_some(), r.phase == "augmentor");
    }
    assert_eq!(out.log.records.last().unwrap().pool_size, out.log.switches);
}

#[test]
fn non_finite_inputs_abort_with_the_iteration() {
    let mut x = make_toy_dataset(0, 40).unwrap().train;
    x.data_mut()[0] = f64::NAN;
    let mut cfg = toy_cfg(10, 0);
    cfg.batch_size = 40;
    let mut student = Mlp::new([1, 8, 8, 1], &mut Rng::seed(0)).unwrap();
    match train_hard(&cfg, &CosTeacher, &mut student, gaussian(), &x) {
        Err(Error::NonFinite { what }) => assert!(what.contains("iteration 0"), "{what}"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn joint_mode_updates_both_every_step() {
    let data = make_toy_dataset(5, 40).unwrap();
    let mut cfg = toy_cfg(20, 0);
    cfg.joint = true;
    cfg.lambda_t = 0.0;
    let mut student = Mlp::new([1, 8, 8, 1], &mut Rng::seed(0)).unwrap();
    let aug = Augmentor::Gaussian(GaussianAug::new(1, 0.0, 0.5).unwrap());
    let out = train_hard(&cfg, &CosTeacher, &mut student, aug.clone(), &data.train).unwrap();
    assert_eq!((out.log.student_updates(), out.log.augmentor_updates()), (20, 20));
    assert!(out.log.records.iter().all(|r| r.loss_tt.is_none()));
    assert_ne!(out.augmentor, aug);
    assert!(out.pool.is_empty());
}

#[test]
fn clean_fraction_one_ignores_the_pool() {
    let data = make_toy_dataset(6, 40).unwrap();
    let mut cfg = toy_cfg(300, 2);
    cfg.clean_fraction = 1.0;
    let mut a = Mlp::new([1, 8, 8, 1], &mut Rng::seed(0)).unwrap();
    let out = train_hard(&cfg, &CosTeacher, &mut a, gaussian(), &data.train).unwrap();
    assert!(out.log.student_updates() > 0);
    let x = Tensor::new([1, 1], vec![0.0]).unwrap();
    assert!(a.predict(&x).unwrap().data()[0].is_finite());
}
