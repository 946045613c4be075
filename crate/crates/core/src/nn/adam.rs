use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 2e-4, beta1: 0.5, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F: Scalar = f32> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig, params: &[&Tensor<F>]) -> Self {
        let zeros = |p: &&Tensor<F>| Tensor::zeros(p.shape());
        AdamState { config, m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect(), step: 0 }
    }
}

impl AdamState<f32> {
    /// Moments as `m.{i}` and `v.{i}`, the step counter as `step`.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            c.insert(format!("m.{i}"), m);
            c.insert(format!("v.{i}"), v);
        }
        c.insert("step", &Tensor::scalar(self.step as f32));
        c
    }

    /// Restore moments saved by `to_checkpoint` into a state of matching shapes.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let fetch = |name: String, like: &Tensor| -> Result<Tensor> {
            let t = ckpt.get::<f32>(&name).ok_or_else(|| Error::Format(format!("optimizer state lacks {name}")))?;
            if t.shape() != like.shape() {
                return Err(Error::Dimension(format!("{name}: stored {:?}, expected {:?}", t.shape(), like.shape())));
            }
            Ok(t)
        };
        let m = self.m.iter().enumerate().map(|(i, like)| fetch(format!("m.{i}"), like)).collect::<Result<Vec<_>>>()?;
        let v = self.v.iter().enumerate().map(|(i, like)| fetch(format!("v.{i}"), like)).collect::<Result<Vec<_>>>()?;
        let step = ckpt.get::<f32>("step").ok_or_else(|| Error::Format("optimizer state lacks step".into()))?;
        self.m = m;
        self.v = v;
        self.step = step.data()[0] as u64;
        Ok(())
    }
}

/// One bias-corrected Adam update of every parameter tensor.
pub fn adam_step<F: Scalar>(params: &mut [&mut Tensor<F>], grads: &[Tensor<F>], state: &mut AdamState<F>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Dimension(format!("adam: tensor {i} shape {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
    let one = F::one();
    let t = state.step as i32;
    let corr1 = F::of(1.0 - c.beta1.powi(t));
    let corr2 = F::of(1.0 - c.beta2.powi(t));
    let (lr, eps) = (F::of(c.learning_rate), F::of(c.epsilon));
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let mhat = *mv / corr1;
            let vhat = *vv / corr2;
            *pv -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
