use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Relu => x.max(F::zero()),
            Activation::LeakyRelu(a) => {
                if x > F::zero() {
                    x
                } else {
                    F::of(a) * x
                }
            }
            Activation::Sigmoid => {
                // split by sign so exp never overflows
                if x >= F::zero() {
                    (F::one() + (-x).exp()).recip()
                } else {
                    let e = x.exp();
                    e / (F::one() + e)
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    #[inline]
    fn derivative<F: Scalar>(self, x: F, y: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu(a) => {
                if x > F::zero() {
                    F::one()
                } else {
                    F::of(a)
                }
            }
            Activation::Sigmoid => y * (F::one() - y),
            Activation::Tanh => F::one() - y * y,
        }
    }
}

pub fn activate<F: Scalar>(input: &Tensor<F>, kind: Activation) -> Tensor<F> {
    input.map(|v| kind.apply(v))
}

/// Gradient with respect to the input, given the forward input and output.
pub fn activate_backward<F: Scalar>(
    input: &Tensor<F>,
    output: &Tensor<F>,
    grad_out: &Tensor<F>,
    kind: Activation,
) -> Result<Tensor<F>> {
    if input.shape() != grad_out.shape() || output.shape() != grad_out.shape() {
        return Err(Error::Dimension("activation gradient shape mismatch".into()));
    }
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .zip(grad_out.data())
        .map(|((&x, &y), &g)| g * kind.derivative(x, y))
        .collect();
    Tensor::from_vec(input.shape().to_vec(), data)
}
