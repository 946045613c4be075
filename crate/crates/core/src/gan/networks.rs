use super::config::{NetSpec, Regularization};
use crate::error::{Error, Result};
use crate::nn::{
    checkpoint::Checkpoint, fan_in, msra_init, normal_init, Activation, BatchNormParams, ConvGeometry, Layer, Mode,
    Rng, Scalar, Sequential, Tape, Tensor,
};

/// Std of the discriminator's dense head, small so fresh scores sit near 0.5.
const HEAD_INIT_STD: f64 = 0.02;

/// Noise vector → fake cube in (−1, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<F: Scalar = f32> {
    spec: NetSpec,
    net: Sequential<F>,
}

/// Cube → probability that it holds flame.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<F: Scalar = f32> {
    spec: NetSpec,
    net: Sequential<F>,
}

pub fn build_generator<F: Scalar>(spec: &NetSpec, reg: &Regularization, rng: &mut Rng) -> Result<Generator<F>> {
    spec.validate()?;
    let (h0, w0) = spec.gen_base()?;
    let k = spec.gen_kernel;
    let geometry = ConvGeometry::new(k, 2, (k - 2) / 2);
    let n = spec.gen_channels.len();
    let mut net = Sequential::new();

    let c0 = spec.gen_channels[0];
    let width = h0 * w0 * c0;
    net.push("dense", Layer::Dense { weight: msra_init(&[spec.z_dim, width], spec.z_dim, rng), bias: Tensor::zeros(&[width]) });
    net.push("reshape", Layer::Reshape { shape: vec![h0, w0, c0] });
    push_hidden(&mut net, 0, c0, reg);

    let (mut h, mut w) = (h0, w0);
    for i in 0..n {
        let c_in = spec.gen_channels[i];
        let c_out = if i + 1 == n { spec.input_shape[2] } else { spec.gen_channels[i + 1] };
        let shape = [k, k, c_out, c_in];
        net.push(
            format!("tconv{}", i + 1),
            Layer::ConvTranspose { weight: msra_init(&shape, k * k * c_in, rng), bias: Tensor::zeros(&[c_out]), geometry },
        );
        h = geometry.transpose_out(h)?;
        w = geometry.transpose_out(w)?;
        if i + 1 < n {
            push_hidden(&mut net, i + 1, c_out, reg);
        }
    }
    net.push("tanh", Layer::Activation(Activation::Tanh));
    if [h, w] != spec.input_shape[..2] {
        return Err(Error::Spec(format!("generator reaches {h}x{w}, expected {:?}", &spec.input_shape[..2])));
    }
    Ok(Generator { spec: spec.clone(), net })
}

fn push_hidden<F: Scalar>(net: &mut Sequential<F>, i: usize, channels: usize, reg: &Regularization) {
    net.push(format!("bn{i}"), Layer::BatchNorm(BatchNormParams::new(channels, reg.bn_momentum, reg.bn_eps)));
    net.push(format!("relu{i}"), Layer::Activation(Activation::Relu));
    net.push(format!("drop{i}"), Layer::Dropout { rate: reg.gen_dropout });
}

pub fn build_discriminator<F: Scalar>(spec: &NetSpec, reg: &Regularization, rng: &mut Rng) -> Result<Discriminator<F>> {
    spec.validate()?;
    let k = spec.disc_kernel;
    let geometry = ConvGeometry::new(k, 2, (k - 1) / 2);
    let [mut h, mut w, mut c] = spec.input_shape;
    let mut net = Sequential::new();
    net.push("noise", Layer::GaussianNoise { std: reg.input_noise_std });
    for (i, &c_out) in spec.disc_channels.iter().enumerate() {
        let shape = [k, k, c, c_out];
        net.push(
            format!("conv{i}"),
            Layer::Conv { weight: msra_init(&shape, fan_in(&shape), rng), bias: Tensor::zeros(&[c_out]), geometry },
        );
        net.push(format!("act{i}"), Layer::Activation(Activation::LeakyRelu(spec.leaky_slope)));
        net.push(format!("drop{i}"), Layer::Dropout { rate: reg.disc_dropout });
        h = geometry.conv_out(h).map_err(|e| Error::Spec(e.to_string()))?;
        w = geometry.conv_out(w).map_err(|e| Error::Spec(e.to_string()))?;
        c = c_out;
    }
    let features = h * w * c;
    net.push("flatten", Layer::Reshape { shape: vec![features] });
    net.push("dense", Layer::Dense { weight: normal_init(&[features, 1], HEAD_INIT_STD, rng), bias: Tensor::zeros(&[1]) });
    net.push("sigmoid", Layer::Activation(Activation::Sigmoid));
    Ok(Discriminator { spec: spec.clone(), net })
}

fn check_input<F: Scalar>(spec: &NetSpec, x: &Tensor<F>) -> Result<()> {
    if x.rank() != 4 || x.shape()[1..] != spec.input_shape {
        return Err(Error::Dimension(format!("expected a batch of {:?}, got {:?}", spec.input_shape, x.shape())));
    }
    Ok(())
}

macro_rules! network_common {
    ($ty:ident) => {
        impl<F: Scalar> $ty<F> {
            pub fn spec(&self) -> &NetSpec {
                &self.spec
            }

            pub fn network(&self) -> &Sequential<F> {
                &self.net
            }

            pub fn network_mut(&mut self) -> &mut Sequential<F> {
                &mut self.net
            }

            pub fn backward(&self, tape: Tape<F>, grad_out: &Tensor<F>) -> Result<(Tensor<F>, Vec<Tensor<F>>)> {
                self.net.backward(tape, grad_out)
            }

            pub fn to_checkpoint(&self) -> Checkpoint {
                let mut c = Checkpoint::new();
                for (name, t) in self.net.named_tensors() {
                    c.insert(name, t);
                }
                c
            }

            /// Replace parameters and statistics with those in `ckpt`.
            pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
                self.net.load_named(|name| ckpt.get(name))
            }

            pub fn cast<G: Scalar>(&self) -> $ty<G> {
                $ty { spec: self.spec.clone(), net: self.net.cast() }
            }

            pub fn parameter_count(&self) -> usize {
                self.net.params().iter().map(|t| t.len()).sum()
            }
        }
    };
}

network_common!(Generator);
network_common!(Discriminator);

impl<F: Scalar> Generator<F> {
    /// `z` is `[n, z_dim]`; the result is `[n, H, W, C]`.
    pub fn forward(&mut self, z: &Tensor<F>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<F>, Tape<F>)> {
        if z.rank() != 2 || z.dim(1) != self.spec.z_dim {
            return Err(Error::Dimension(format!("noise must be [n, {}], got {:?}", self.spec.z_dim, z.shape())));
        }
        self.net.forward(z, mode, rng)
    }

    pub fn generate(&self, z: &Tensor<F>) -> Result<Tensor<F>> {
        if z.rank() != 2 || z.dim(1) != self.spec.z_dim {
            return Err(Error::Dimension(format!("noise must be [n, {}], got {:?}", self.spec.z_dim, z.shape())));
        }
        self.net.infer(z)
    }
}

impl<F: Scalar> Discriminator<F> {
    /// Probabilities `[n, 1]` for a batch `[n, H, W, C]`.
    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<F>, Tape<F>)> {
        check_input(&self.spec, x)?;
        self.net.forward(x, mode, rng)
    }

    /// Inference scores: noise and dropout off.
    pub fn score(&self, x: &Tensor<F>) -> Result<Vec<F>> {
        check_input(&self.spec, x)?;
        Ok(self.net.infer(x)?.into_data())
    }
}
