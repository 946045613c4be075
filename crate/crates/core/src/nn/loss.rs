use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Probability clamp keeping `log` finite.
pub const PROB_EPS: f64 = 1e-7;

/// Binary cross-entropy `−mean(t·ln p + (1 − t)·ln(1 − p))` and its gradient
/// with respect to `pred`. Probabilities are clamped to `[ε, 1 − ε]`.
pub fn bce_loss<F: Scalar>(pred: &Tensor<F>, targets: &[F]) -> Result<(F, Tensor<F>)> {
    if pred.len() != targets.len() {
        return Err(Error::Dimension(format!("{} predictions for {} targets", pred.len(), targets.len())));
    }
    let eps = F::of(PROB_EPS);
    let one = F::one();
    let n = F::of(pred.len() as f64);
    let mut loss = F::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(targets) {
        let p = p.max(eps).min(one - eps);
        loss -= t * p.ln() + (one - t) * (one - p).ln();
        grad.push((p - t) / (p * (one - p)) / n);
    }
    Ok((loss / n, Tensor::from_vec(pred.shape().to_vec(), grad)?))
}
