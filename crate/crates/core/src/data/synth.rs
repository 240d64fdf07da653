//! Procedural 28x28 sprites standing in for handwritten digits.

use super::DigitDataset;
use crate::diffcore::{Rng, Tensor};
use crate::error::{Error, Result};

pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

/// Sprites are drawn inside rows and columns `BOX_LO..=BOX_HI`, a centered
/// 16x16 box, so any shift of up to 6 pixels keeps them on the canvas.
pub const BOX_LO: usize = 6;
pub const BOX_HI: usize = 21;

pub const CLASS_NAMES: [&str; CLASSES] = [
    "hbar", "vbar", "plus", "square", "diag", "antidiag", "cross", "ring", "disk", "equals",
];

fn inside(class: usize, u: f64, v: f64, r: f64, t: f64) -> bool {
    let s2 = std::f64::consts::SQRT_2;
    let in_square = u.abs() < r && v.abs() < r;
    let hbar = v.abs() < t && u.abs() < r;
    let vbar = u.abs() < t && v.abs() < r;
    let diag = (u - v).abs() / s2 < t && in_square;
    let anti = (u + v).abs() / s2 < t && in_square;
    let rho = u.hypot(v);
    match class {
        0 => hbar,
        1 => vbar,
        2 => hbar || vbar,
        3 => in_square && u.abs().max(v.abs()) > r - 2.0 * t,
        4 => diag,
        5 => anti,
        6 => diag || anti,
        7 => (rho - (r - t)).abs() < t,
        8 => rho < r - 1.0,
        _ => ((v - r / 2.0).abs() < t || (v + r / 2.0).abs() < t) && u.abs() < r,
    }
}

/// Renders one binary sprite. `r` is the half extent and `t` the stroke
/// half-width, both in pixels.
pub fn render_sprite(class: usize, r: f64, t: f64) -> Vec<f64> {
    let c = (BOX_LO + BOX_HI) as f64 / 2.0;
    let mut img = vec![0.0; SIDE * SIDE];
    for i in BOX_LO..=BOX_HI {
        for j in BOX_LO..=BOX_HI {
            if inside(class, j as f64 - c, i as f64 - c, r, t) {
                img[i * SIDE + j] = 1.0;
            }
        }
    }
    img
}

/// `n` centered sprites with balanced classes in shuffled order. Size and stroke
/// width are jittered per sample.
pub fn synth_shapes(n: usize, seed: u64) -> Result<DigitDataset> {
    if n < CLASSES {
        return Err(Error::invalid("synth_shapes", format!("n = {n} < {CLASSES}")));
    }
    let mut rng = Rng::seed(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % CLASSES).collect();
    rng.shuffle(&mut labels);
    let mut data = Vec::with_capacity(n * SIDE * SIDE);
    for &label in &labels {
        let r = rng.uniform(5.0, 7.5);
        let t = rng.uniform(0.6, 1.4);
        data.extend(render_sprite(label, r, t));
    }
    Ok(DigitDataset {
        images: Tensor::new([n, 1, SIDE, SIDE], data)?,
        labels,
        split: "synthetic".into(),
    })
}
