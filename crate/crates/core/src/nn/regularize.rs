use super::tensor::{Scalar, Tensor};
use super::Rng;
use crate::error::{Error, Result};

/// Inverted dropout. In training each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 − rate)`; otherwise identity.
/// Returns the output and the per-element multiplier (`None` for identity).
pub fn dropout<F: Scalar>(input: &Tensor<F>, rate: f64, rng: &mut Rng, training: bool) -> Result<(Tensor<F>, Option<Vec<F>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Param(format!("dropout rate {rate} must be in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = F::of(1.0 / (1.0 - rate));
    let mask: Vec<F> = (0..input.len()).map(|_| if rng.uniform() < rate { F::zero() } else { keep }).collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::from_vec(input.shape().to_vec(), data)?, Some(mask)))
}

/// Additive i.i.d. `N(0, std²)` noise during training; identity otherwise.
pub fn gaussian_noise<F: Scalar>(input: &Tensor<F>, std: f64, rng: &mut Rng, training: bool) -> Result<Tensor<F>> {
    if !(std >= 0.0) {
        return Err(Error::Param(format!("noise std {std} must be non-negative")));
    }
    if !training || std == 0.0 {
        return Ok(input.clone());
    }
    let s = F::of(std);
    Ok(input.map(|v| v + rng.normal(s)))
}
