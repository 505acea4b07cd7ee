//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Tape`] records eagerly evaluated operators together with the data their
//! backward rules need. Tensors are 64-bit, row-major and at most rank 3; the
//! only broadcasting is a per-row bias ([`Tape::add_row`]) and per-row scaling
//! ([`Tape::mul_col`], [`Tape::scale_rows`]).
//!
//! ```
//! use meshgnn::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
//! let x = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
//! let y = tape.matmul(w, x).unwrap();
//! let loss = tape.sum(y);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap(), &[3.0, 4.0]);
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::gradcheck;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{op}: segment id {segment} out of range for {count} segments")]
    SegmentOutOfRange {
        op: &'static str,
        segment: usize,
        count: usize,
    },
    #[error("tensor rank {rank} exceeds the supported maximum of 3")]
    Rank { rank: usize },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss does not depend on any tracked tensor")]
    UntrackedLoss,
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Weighted sum against a fixed random probe so every output element matters.
    fn probe_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var, AutodiffError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = tape.shape(y).to_vec();
        let w = tape.constant(random(&mut rng, &shape));
        let p = tape.mul(y, w)?;
        Ok(tape.sum(p))
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[2], vec![-1.0, 2.0]).unwrap());
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 4], 3.7));
        let y = tape.softmax(x);
        assert_eq!(tape.value(y).data(), &[0.25; 4]);
    }

    #[test]
    fn segment_sum_groups_rows() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(3, 1, vec![1.5, 2.0, 7.0]).unwrap());
        let seg: Arc<[usize]> = vec![0, 0, 1].into();
        let y = tape.segment_sum(x, &seg, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[3.5, 7.0]);
    }

    #[test]
    fn segment_max_ties_route_to_lowest_row() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(3, 1, vec![2.0, 2.0, 1.0]).unwrap());
        let seg: Arc<[usize]> = vec![0, 0, 0].into();
        let y = tape.segment_max(x, &seg, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 0.0]);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn singleton_segments_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let t = random(&mut rng, &[5, 3]);
        let x = tape.constant(t.clone());
        let seg: Arc<[usize]> = (0..5).collect::<Vec<_>>().into();
        let s = tape.segment_sum(x, &seg, 5).unwrap();
        let m = tape.segment_max(x, &seg, 5).unwrap();
        assert_eq!(tape.value(s), &t);
        assert_eq!(tape.value(m), &t);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[2, 2], 1.0));
        let c = tape.scale(x, 0.0);
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reused_input_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[3], 0.3));
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[2], 1.0));
        assert!(matches!(
            tape.backward(x),
            Err(AutodiffError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::ShapeMismatch {
                op: "matmul",
                shapes: vec![vec![2, 3], vec![2, 3]]
            }
        );
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn matmul_gradient_is_outer_product() {
        let w = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap();
        let x = Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let mut tape = Tape::new();
        let wv = tape.leaf(w);
        let xv = tape.constant(x);
        let y = tape.matmul(wv, xv).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(wv).unwrap(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn linear_map_gradcheck_is_near_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inputs = [random(&mut rng, &[3, 4]), random(&mut rng, &[4, 2])];
        let err = gradcheck(
            |t, v| {
                let y = t.matmul(v[0], v[1])?;
                Ok(t.sum(y))
            },
            &inputs,
            1e-3,
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn sigmoid_matmul_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs = [random(&mut rng, &[4, 3]), random(&mut rng, &[3, 5])];
        let err = gradcheck(
            |t, v| {
                let y = t.matmul(v[0], v[1])?;
                let s = t.sigmoid(y);
                probe_sum(t, s, 9)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn wrong_backward_rule_is_caught() {
        let inputs = [Tensor::new(&[4], vec![0.3, -0.7, 1.1, 0.5]).unwrap()];
        // sin with a deliberately wrong derivative.
        let err = gradcheck(
            |t, v| {
                let y = t.map(v[0], f64::sin, |x| x.sin());
                Ok(t.sum(y))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn gradcheck_rejects_non_finite() {
        let inputs = [Tensor::new(&[1], vec![f64::NAN]).unwrap()];
        assert!(matches!(
            gradcheck(|t, v| Ok(t.sum(v[0])), &inputs, 1e-5),
            Err(AutodiffError::NonFinite(_))
        ));
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[10], 2.0));
        let y = tape.dropout(x, 0.1, false, &mut rng).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let p = 0.1;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[n], 1.0));
        let y = tape.dropout(x, p, true, &mut rng).unwrap();
        let mean = tape.value(y).data().iter().sum::<f64>() / n as f64;
        // Each element is 0 or 1/(1-p): variance p/(1-p).
        let sigma = (p / (1.0 - p) / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sigma, "mean {mean}");
    }
}
