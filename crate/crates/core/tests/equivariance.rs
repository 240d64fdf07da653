//! Sanity checks on the synthetic sprites: a small CNN separates them, and a
//! trained MLP is not shift-equivariant.

use hard_core::data::{shift_with_offsets, synth_shapes, Offset};
use hard_core::diffcore::{AdamConfig, Rng};
use hard_core::distill::{accuracy, fit_labels, FitConfig};
use hard_core::models::{Cnn, CnnConfig, Mlp, Model};

#[test]
fn small_cnn_fits_the_sprites() {
    let data = synth_shapes(1000, 1).unwrap();
    let config = CnnConfig { conv1: 8, conv2: 16, ..CnnConfig::default() };
    let mut cnn = Cnn::new(config, &mut Rng::seed(0)).unwrap();
    let cfg = FitConfig {
        iterations: 1000,
        batch_size: 32,
        optimizer: AdamConfig::with_lr(3e-3),
        seed: 0,
    };
    fit_labels(&mut cnn, &data.images, &data.labels, &cfg).unwrap();
    let acc = accuracy(&cnn, &data.images, &data.labels).unwrap();
    assert!(acc > 0.95, "train accuracy {acc}");
}

#[test]
fn trained_mlp_changes_its_mind_under_four_pixel_shifts() {
    let data = synth_shapes(2000, 2).unwrap();
    let mut mlp = Mlp::new([784, 256, 256, 10], &mut Rng::seed(1)).unwrap();
    fit_labels(&mut mlp, &data.images, &data.labels, &FitConfig { iterations: 600, ..FitConfig::default() }).unwrap();
    assert!(accuracy(&mlp, &data.images, &data.labels).unwrap() > 0.95);

    let eval = synth_shapes(500, 3).unwrap();
    let mut rng = Rng::seed(4);
    let offsets: Vec<Offset> = (0..eval.len())
        .map(|_| {
            let s = if rng.bernoulli(0.5) { 4 } else { -4 };
            if rng.bernoulli(0.5) { (s, 0) } else { (0, s) }
        })
        .collect();
    let shifted = shift_with_offsets(&eval.images, &offsets).unwrap();
    let a = mlp.predict(&eval.images).unwrap().argmax_rows().unwrap();
    let b = mlp.predict(&shifted).unwrap().argmax_rows().unwrap();
    let changed = a.iter().zip(&b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64;
    assert!(changed > 0.10, "argmax changed on {changed}");
}
