//! Dense-tensor reverse-mode differentiation and the two model families
//! (linear softmax classifier, one-hidden-layer ReLU MLP) used by every
//! trainer.

mod model;
mod tape;
mod tensor;

pub use model::{sgd_step, Architecture, BoundParams, Layer, ModelParams};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;

use crate::error::Result;

/// Per-example softmax cross-entropy without recording a tape.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let losses = tape.cross_entropy(l, labels)?;
    Ok(tape.value(losses).data().to_vec())
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let cols = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}

/// Compares autodiff against central differences over every parameter
/// coordinate and returns
/// `max_i |autodiff_i − fd_i| / (|fd_i| + 1e−12)`.
///
/// A NaN anywhere in the objective yields a NaN result.
pub fn grad_check<F>(objective: F, point: &ModelParams, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ModelParams, &BoundParams) -> Result<NodeId>,
{
    if !(epsilon > 0.0) {
        return Err(crate::Error::Validation(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }
    let mut tape = Tape::new();
    let bound = point.bind(&mut tape);
    let root = objective(&mut tape, point, &bound)?;
    let grads = tape.backward(root)?;
    let analytic = point.gradient_of(&grads, &bound).flatten();

    let eval = |flat: &[f64]| -> Result<f64> {
        let p = point.with_flat(flat)?;
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let root = objective(&mut tape, &p, &bound)?;
        Ok(tape.value(root).data()[0])
    };

    let base = point.flatten();
    let mut worst: f64 = 0.0;
    for (i, &ad) in analytic.iter().enumerate() {
        let mut plus = base.clone();
        plus[i] += epsilon;
        let mut minus = base.clone();
        minus[i] -= epsilon;
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * epsilon);
        let err = (ad - fd).abs() / (fd.abs() + 1e-12);
        if err.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
