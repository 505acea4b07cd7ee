use crate::autodiff::{Tape, Var};

use super::TrainError;

/// Added under the square root in the derivative only, so the loss value
/// stays exact while the gradient is finite at zero error.
pub const SQRT_GUARD: f64 = 1e-12;

/// Mean over nodes of the Euclidean norm of `pred - labels`, both `[nodes, 3]`.
pub fn loss_mean_euclidean(tape: &mut Tape, pred: Var, labels: Var) -> Result<Var, TrainError> {
    if tape.shape(pred) != tape.shape(labels) || tape.shape(pred).len() != 2 {
        return Err(TrainError::ShapeMismatch {
            pred: tape.shape(pred).to_vec(),
            labels: tape.shape(labels).to_vec(),
        });
    }
    let d = tape.sub(pred, labels)?;
    let sq = tape.mul(d, d)?;
    let s = tape.row_sum(sq);
    let norms = tape.map(s, f64::sqrt, |s| 0.5 / (s + SQRT_GUARD).sqrt());
    Ok(tape.mean(norms))
}

/// Plain evaluation of the same quantity on row-major `[nodes, 3]` slices.
pub fn mean_euclidean(pred: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    if pred.len() != labels.len() || pred.len() % 3 != 0 {
        return Err(TrainError::ShapeMismatch {
            pred: vec![pred.len()],
            labels: vec![labels.len()],
        });
    }
    let n = pred.len() / 3;
    let total: f64 = pred
        .chunks_exact(3)
        .zip(labels.chunks_exact(3))
        .map(|(p, y)| euclidean(p, y))
        .sum();
    Ok(total / n.max(1) as f64)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
