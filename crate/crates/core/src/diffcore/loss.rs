//! Probability and distance functions used by the distillation objectives.

use super::{Tensor, Var};
use crate::error::{Error, Result};

/// Floor applied to `q` before taking its logarithm in [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;

/// Row-wise `softmax(logits / temperature)` over the last axis.
pub fn softmax_with_temperature<'g>(logits: Var<'g>, temperature: f64) -> Result<Var<'g>> {
    logits.softmax_last(temperature)
}

fn rows_of(op: &'static str, p: &Tensor, q: &Tensor) -> Result<(usize, usize)> {
    if p.shape() != q.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", p.shape(), q.shape())));
    }
    let c = match p.shape().last() {
        Some(&c) if c > 0 => c,
        _ => return Err(Error::shape(op, format!("need a class axis, got {:?}", p.shape()))),
    };
    Ok((p.len() / c, c))
}

/// `KL(p || q)` averaged over rows: `mean_b sum_c p (ln p - ln max(q, 1e-12))`.
/// Entries with `p == 0` contribute nothing.
pub fn kl_divergence<'g>(p: Var<'g>, q: Var<'g>) -> Result<Var<'g>> {
    let (pv, qv) = (p.value(), q.value());
    let (rows, _) = rows_of("kl_divergence", &pv, &qv)?;
    if pv.data().iter().chain(qv.data()).any(|v| *v < 0.0 || v.is_nan()) {
        return Err(Error::invalid(
            "kl_divergence",
            "probabilities must be non-negative",
        ));
    }
    let total: f64 = pv
        .data()
        .iter()
        .zip(qv.data())
        .filter(|(pc, _)| **pc > 0.0)
        .map(|(&pc, &qc)| pc * (pc.ln() - qc.max(KL_FLOOR).ln()))
        .sum();
    let scale = 1.0 / rows as f64;
    let out = Tensor::scalar(total * scale);
    let (need_p, need_q) = (p.requires_grad(), q.requires_grad());
    Ok(p.graph.record(out, &[p, q], move |g| {
        let s = g.data()[0] * scale;
        let gp = need_p.then(|| {
            pv.zip_map(&qv, |pc, qc| {
                if pc > 0.0 {
                    s * (pc.ln() - qc.max(KL_FLOOR).ln() + 1.0)
                } else {
                    0.0
                }
            })
        });
        let gq = need_q.then(|| {
            pv.zip_map(&qv, |pc, qc| if qc > KL_FLOOR { -s * pc / qc } else { 0.0 })
        });
        vec![gp, gq]
    }))
}

/// Mean of squared elementwise differences.
pub fn mse<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    let (av, bv) = (a.value(), b.value());
    if av.shape() != bv.shape() {
        return Err(Error::shape("mse", format!("{:?} vs {:?}", av.shape(), bv.shape())));
    }
    let n = av.len() as f64;
    let diff = av.zip_map(&bv, |x, y| x - y);
    let out = Tensor::scalar(diff.data().iter().map(|d| d * d).sum::<f64>() / n);
    let (need_a, need_b) = (a.requires_grad(), b.requires_grad());
    Ok(a.graph.record(out, &[a, b], move |g| {
        let s = 2.0 * g.data()[0] / n;
        vec![
            need_a.then(|| diff.map(|d| s * d)),
            need_b.then(|| diff.map(|d| -s * d)),
        ]
    }))
}

/// Mean negative log-likelihood of integer `labels` under `softmax(logits)`.
pub fn cross_entropy<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    let x = logits.value();
    if x.rank() != 2 || x.shape()[0] != labels.len() || x.shape()[1] == 0 {
        return Err(Error::shape(
            "cross_entropy",
            format!("logits {:?} with {} labels", x.shape(), labels.len()),
        ));
    }
    let c = x.shape()[1];
    if let Some(bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(
            "cross_entropy",
            format!("label {bad} out of range for {c} classes"),
        ));
    }
    let mut probs = (*x).clone();
    let mut total = 0.0;
    for (row, &label) in probs.data_mut().chunks_mut(c).zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    let rows = labels.len() as f64;
    let labels = labels.to_vec();
    Ok(logits.graph.record(
        Tensor::scalar(total / rows),
        &[logits],
        move |g| {
            let s = g.data()[0] / rows;
            let mut gx = probs.clone();
            for (row, &label) in gx.data_mut().chunks_mut(c).zip(&labels) {
                row[label] -= 1.0;
                row.iter_mut().for_each(|v| *v *= s);
            }
            vec![Some(gx)]
        },
    ))
}
