use super::{DistanceKind, DistillConfig};
use crate::diffcore::{kl_divergence, mse, softmax_with_temperature, Tensor, Var};
use crate::error::{Error, Result};

fn distance<'g>(op: &'static str, target: Var<'g>, other: Var<'g>, cfg: &DistillConfig) -> Result<Var<'g>> {
    if target.shape() != other.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", target.shape(), other.shape())));
    }
    match cfg.distance {
        DistanceKind::Mse => mse(other, target),
        DistanceKind::Kl => {
            let t = cfg.temperature;
            let p = softmax_with_temperature(target, t)?;
            let q = softmax_with_temperature(other, t)?;
            Ok(kl_divergence(p, q)?.scale(t * t))
        }
    }
}

/// `T^2 * KL(softmax(teacher / T) || softmax(student / T))`, or the MSE between
/// raw outputs for regression.
///
/// Gradients flow into both arguments. With the teacher's parameters frozen
/// this still lets an augmentor see how the teacher's output moves with `x~`.
pub fn teacher_student_loss<'g>(student_out: Var<'g>, teacher_out: Var<'g>, cfg: &DistillConfig) -> Result<Var<'g>> {
    distance("teacher_student_loss", teacher_out, student_out, cfg)
}

/// Distance between the teacher on augmented and on original inputs. The
/// original-input outputs are treated as constants.
pub fn teacher_teacher_loss<'g>(teacher_aug_out: Var<'g>, teacher_orig_out: Var<'g>, cfg: &DistillConfig) -> Result<Var<'g>> {
    distance("teacher_teacher_loss", teacher_orig_out.detach(), teacher_aug_out, cfg)
}

/// `lambda_s * L_st - lambda_t * L_tt`, the quantity the augmentor ascends.
pub fn augmentor_objective<'g>(l_st: Var<'g>, l_tt: Option<Var<'g>>, lambda_s: f64, lambda_t: f64) -> Result<Var<'g>> {
    let obj = l_st.scale(lambda_s);
    match l_tt {
        Some(l) if lambda_t != 0.0 => obj.sub(l.scale(lambda_t)),
        _ => Ok(obj),
    }
}

/// Argmax disagreement rate for classification, batch MSE for regression.
pub fn monitored_metric(student_out: &Tensor, teacher_out: &Tensor, kind: DistanceKind) -> Result<f64> {
    if student_out.shape() != teacher_out.shape() {
        return Err(Error::shape(
            "monitored_metric",
            format!("{:?} vs {:?}", student_out.shape(), teacher_out.shape()),
        ));
    }
    match kind {
        DistanceKind::Kl => {
            let (s, t) = (student_out.argmax_rows()?, teacher_out.argmax_rows()?);
            if s.is_empty() {
                return Ok(0.0);
            }
            Ok(s.iter().zip(&t).filter(|(a, b)| a != b).count() as f64 / s.len() as f64)
        }
        DistanceKind::Mse => {
            let n = student_out.len().max(1) as f64;
            Ok(student_out
                .data()
                .iter()
                .zip(teacher_out.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n)
        }
    }
}
