use super::tensor::{Scalar, Tensor};
use super::Rng;

/// MSRA (He) initialization: i.i.d. `N(0, 2 / fan_in)`. For rank-4 conv
/// weights `[k, k, c_in, c_out]` the fan-in is `k·k·c_in`; for rank-2 dense
/// weights `[in, out]` it is `in`.
pub fn msra_init<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<F> {
    normal_init(shape, (2.0 / fan_in as f64).sqrt(), rng)
}

pub fn normal_init<F: Scalar>(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor<F> {
    let mut t = Tensor::zeros(shape);
    let s = F::of(std);
    t.data_mut().iter_mut().for_each(|v| *v = rng.normal(s));
    t
}

/// Fan-in implied by a weight shape, following [`msra_init`].
pub fn fan_in(shape: &[usize]) -> usize {
    match shape {
        [k1, k2, c_in, _] => k1 * k2 * c_in,
        [n, _] => *n,
        other => other.iter().take(other.len().saturating_sub(1)).product::<usize>().max(1),
    }
}
