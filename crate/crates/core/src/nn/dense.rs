use super::tensor::{axpy, dot, Scalar, Tensor};
use crate::error::{Error, Result};

fn rows<F: Scalar>(input: &Tensor<F>, weight: &Tensor<F>) -> Result<(usize, usize, usize)> {
    weight.expect_rank(2, "dense weight")?;
    let (fan_in, fan_out) = (weight.dim(0), weight.dim(1));
    let n = input.dim(0);
    if input.len() != n * fan_in {
        return Err(Error::Dimension(format!(
            "dense expects {fan_in} features per sample, input shape {:?}",
            input.shape()
        )));
    }
    Ok((n, fan_in, fan_out))
}

/// `out[n, j] = Σ_i W[i][j] · x[n, i] + b[j]`. Every axis after the first is
/// flattened into features.
pub fn dense<F: Scalar>(input: &Tensor<F>, weight: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, fan_in, fan_out) = rows(input, weight)?;
    if bias.len() != fan_out {
        return Err(Error::Dimension(format!("dense bias has {} entries, expected {fan_out}", bias.len())));
    }
    let mut out = Vec::with_capacity(n * fan_out);
    for x in input.data().chunks(fan_in) {
        let mut y = bias.data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, &weight.data()[i * fan_out..][..fan_out], &mut y);
        }
        out.extend_from_slice(&y);
    }
    Tensor::from_vec(vec![n, fan_out], out)
}

/// Gradients of [`dense`] with respect to input (in the input's shape), weight and bias.
pub fn dense_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let (n, fan_in, fan_out) = rows(input, weight)?;
    if grad_out.shape() != [n, fan_out] {
        return Err(Error::Dimension(format!("dense upstream gradient {:?}, expected [{n}, {fan_out}]", grad_out.shape())));
    }
    let w = weight.data();
    let mut gx = Vec::with_capacity(n * fan_in);
    let mut gw = vec![F::zero(); fan_in * fan_out];
    let mut gb = vec![F::zero(); fan_out];
    for (x, g) in input.data().chunks(fan_in).zip(grad_out.data().chunks(fan_out)) {
        for (i, &xi) in x.iter().enumerate() {
            gx.push(dot(&w[i * fan_out..][..fan_out], g));
            axpy(xi, g, &mut gw[i * fan_out..][..fan_out]);
        }
        axpy(F::one(), g, &mut gb);
    }
    Ok((
        Tensor::from_vec(input.shape().to_vec(), gx)?,
        Tensor::from_vec(weight.shape().to_vec(), gw)?,
        Tensor::from_vec(vec![fan_out], gb)?,
    ))
}
