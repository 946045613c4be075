//! The standard gradient-verification suite: every layer kind in isolation
//! and the complete toy discriminator, all in 64-bit deterministic mode.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gan::{build_discriminator, Discriminator, NetSpec, Regularization};
use crate::nn::grad_check::grad_check_network;
use crate::nn::{Activation, BatchNormParams, ConvGeometry, Layer, Rng, Sequential, Tensor};

/// Tolerance for networks with nonlinear pieces.
pub const TOLERANCE: f64 = 1e-4;
/// Tolerance for layers that are linear in their inputs and parameters.
pub const LINEAR_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    // keep inputs away from activation kinks
    t.data_mut().iter_mut().for_each(|v| {
        let x: f64 = rng.normal(1.0);
        *v = x + 0.05 * x.signum();
    });
    t
}

fn single(layer: Layer<f64>) -> Sequential<f64> {
    let mut net = Sequential::new();
    net.push("layer", layer);
    net
}

fn entry(name: &str, net: &Sequential<f64>, input: &Tensor<f64>, eps: f64, tolerance: f64, seed: u64) -> Result<GradCheckEntry> {
    let r = grad_check_network(net, input, eps, Some(24), seed)?;
    Ok(GradCheckEntry {
        name: name.to_string(),
        passed: r.max_rel_error < tolerance,
        max_rel_error: r.max_rel_error,
        worst: r.worst,
        checked: r.checked,
        tolerance,
    })
}

/// Run the suite with all randomness drawn from `seed`.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckEntry>> {
    let mut rng = Rng::seed(seed);
    let mut out = Vec::new();

    let dense = single(Layer::Dense { weight: random(&[6, 4], &mut rng), bias: random(&[4], &mut rng) });
    out.push(entry("dense", &dense, &random(&[3, 6], &mut rng), 1e-3, LINEAR_TOLERANCE, seed)?);

    let g = ConvGeometry::new(3, 2, 1);
    let conv = single(Layer::Conv { weight: random(&[3, 3, 2, 3], &mut rng), bias: random(&[3], &mut rng), geometry: g });
    out.push(entry("conv2d", &conv, &random(&[2, 5, 6, 2], &mut rng), 1e-3, LINEAR_TOLERANCE, seed)?);

    let g = ConvGeometry::new(4, 2, 1);
    let tconv =
        single(Layer::ConvTranspose { weight: random(&[4, 4, 3, 2], &mut rng), bias: random(&[3], &mut rng), geometry: g });
    out.push(entry("conv2d_transpose", &tconv, &random(&[2, 3, 4, 2], &mut rng), 1e-3, LINEAR_TOLERANCE, seed)?);

    let mut bn = BatchNormParams::new(3, 0.99, 1e-5);
    bn.gamma = random(&[3], &mut rng);
    bn.beta = random(&[3], &mut rng);
    out.push(entry("batch_norm", &single(Layer::BatchNorm(bn)), &random(&[4, 2, 3, 3], &mut rng), 1e-5, TOLERANCE, seed)?);

    for (name, act) in [
        ("relu", Activation::Relu),
        ("leaky_relu", Activation::LeakyRelu(0.2)),
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
    ] {
        out.push(entry(name, &single(Layer::Activation(act)), &random(&[2, 7], &mut rng), 1e-6, TOLERANCE, seed)?);
    }

    let disc: Discriminator<f64> = build_discriminator(&NetSpec::toy(), &Regularization::default(), &mut rng)?;
    let spec = disc.spec().input_shape;
    let x = random(&[2, spec[0], spec[1], spec[2]], &mut rng).map(|v| v.clamp(-1.0, 1.0));
    out.push(entry("toy_discriminator", disc.network(), &x, 1e-6, TOLERANCE, seed)?);
    Ok(out)
}
