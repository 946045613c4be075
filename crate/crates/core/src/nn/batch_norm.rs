use super::tensor::{Scalar, Tensor};
use super::NormMode;
use crate::error::{Error, Result};

/// Per-channel affine parameters and running statistics. The channel axis is
/// the last axis of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<F: Scalar = f32> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Scalar> BatchNormParams<F> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        BatchNormParams {
            gamma: Tensor::full(&[channels], F::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], F::one()),
            momentum: F::of(momentum),
            eps: F::of(eps),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<F: Scalar = f32> {
    xhat: Tensor<F>,
    inv_std: Vec<F>,
    batch_stats: bool,
}

/// Batch statistics of the current call, returned so the caller can fold
/// them into the running averages.
#[derive(Clone, Debug)]
pub(crate) struct BatchStats<F> {
    pub mean: Vec<F>,
    pub unbiased_var: Vec<F>,
}

pub(crate) fn normalize<F: Scalar>(
    input: &Tensor<F>,
    p: &BatchNormParams<F>,
    mode: NormMode,
) -> Result<(Tensor<F>, BatchNormCache<F>, Option<BatchStats<F>>)> {
    let c = p.channels();
    if input.shape().last() != Some(&c) {
        return Err(Error::Dimension(format!("batch norm over {c} channels got shape {:?}", input.shape())));
    }
    let rows = input.len() / c;
    let (mean, var, stats) = match mode {
        NormMode::Batch { .. } => {
            if input.dim(0) < 2 {
                return Err(Error::Batch("batch statistics need at least two samples".into()));
            }
            let inv_rows = F::of(1.0 / rows as f64);
            let mut mean = vec![F::zero(); c];
            for row in input.data().chunks(c) {
                mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m *= inv_rows);
            let mut var = vec![F::zero(); c];
            for row in input.data().chunks(c) {
                for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let bessel = F::of(rows as f64 / (rows - 1).max(1) as f64);
            var.iter_mut().for_each(|s| *s *= inv_rows);
            let unbiased_var = var.iter().map(|&v| v * bessel).collect();
            (mean.clone(), var, Some(BatchStats { mean, unbiased_var }))
        }
        NormMode::Running => (p.running_mean.data().to_vec(), p.running_var.data().to_vec(), None),
    };
    let inv_std: Vec<F> = var.iter().map(|&v| (v + p.eps).sqrt().recip()).collect();
    let mut xhat = Vec::with_capacity(input.len());
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks(c) {
        for j in 0..c {
            let h = (row[j] - mean[j]) * inv_std[j];
            xhat.push(h);
            out.push(p.gamma.data()[j] * h + p.beta.data()[j]);
        }
    }
    let cache = BatchNormCache { xhat: Tensor::from_vec(input.shape().to_vec(), xhat)?, inv_std, batch_stats: stats.is_some() };
    Ok((Tensor::from_vec(input.shape().to_vec(), out)?, cache, stats))
}

pub(crate) fn fold_stats<F: Scalar>(p: &mut BatchNormParams<F>, stats: &BatchStats<F>) {
    let m = p.momentum;
    let one = F::one();
    for (r, &b) in p.running_mean.data_mut().iter_mut().zip(&stats.mean) {
        *r = m * *r + (one - m) * b;
    }
    for (r, &b) in p.running_var.data_mut().iter_mut().zip(&stats.unbiased_var) {
        *r = m * *r + (one - m) * b;
    }
}

/// Batch normalization. In batch mode the output is standardized by the
/// batch's own statistics and, when `update_running` is set, the running
/// averages move by exponential smoothing with `momentum`.
pub fn batch_norm<F: Scalar>(input: &Tensor<F>, params: &mut BatchNormParams<F>, mode: NormMode) -> Result<(Tensor<F>, BatchNormCache<F>)> {
    let (out, cache, stats) = normalize(input, params, mode)?;
    if let (NormMode::Batch { update_running: true }, Some(stats)) = (mode, stats) {
        fold_stats(params, &stats);
    }
    Ok((out, cache))
}

/// Returns gradients with respect to input, gamma and beta.
pub fn batch_norm_backward<F: Scalar>(
    params: &BatchNormParams<F>,
    cache: &BatchNormCache<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let c = params.channels();
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Dimension("batch norm upstream gradient shape mismatch".into()));
    }
    let rows = grad_out.len() / c;
    let mut dgamma = vec![F::zero(); c];
    let mut dbeta = vec![F::zero(); c];
    for (g, h) in grad_out.data().chunks(c).zip(cache.xhat.data().chunks(c)) {
        for j in 0..c {
            dgamma[j] += g[j] * h[j];
            dbeta[j] += g[j];
        }
    }
    let gamma = params.gamma.data();
    let mut gx = Vec::with_capacity(grad_out.len());
    if cache.batch_stats {
        let n = F::of(rows as f64);
        for (g, h) in grad_out.data().chunks(c).zip(cache.xhat.data().chunks(c)) {
            for j in 0..c {
                let k = gamma[j] * cache.inv_std[j] / n;
                gx.push(k * (n * g[j] - dbeta[j] - h[j] * dgamma[j]));
            }
        }
    } else {
        for g in grad_out.data().chunks(c) {
            for j in 0..c {
                gx.push(g[j] * gamma[j] * cache.inv_std[j]);
            }
        }
    }
    Ok((
        Tensor::from_vec(grad_out.shape().to_vec(), gx)?,
        Tensor::from_vec(vec![c], dgamma)?,
        Tensor::from_vec(vec![c], dbeta)?,
    ))
}
