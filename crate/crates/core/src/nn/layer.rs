use super::activation::{activate, activate_backward, Activation};
use super::batch_norm::{batch_norm_backward, fold_stats, normalize, BatchNormCache, BatchNormParams, BatchStats};
use super::conv::{conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward, ConvGeometry};
use super::dense::{dense, dense_backward};
use super::regularize::{dropout, gaussian_noise};
use super::tensor::{Scalar, Tensor};
use super::Rng;
use crate::error::{Error, Result};

/// How batch normalization picks its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Standardize with the batch's own statistics.
    Batch { update_running: bool },
    /// Use the frozen running statistics.
    Running,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    /// Dropout and input noise active.
    pub stochastic: bool,
    pub norm: NormMode,
}

impl Mode {
    pub const TRAIN: Mode = Mode { stochastic: true, norm: NormMode::Batch { update_running: true } };
    /// Training-time statistics without touching running averages or drawing noise.
    pub const DETERMINISTIC: Mode = Mode { stochastic: false, norm: NormMode::Batch { update_running: false } };
    pub const INFER: Mode = Mode { stochastic: false, norm: NormMode::Running };
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<F: Scalar = f32> {
    Dense { weight: Tensor<F>, bias: Tensor<F> },
    Conv { weight: Tensor<F>, bias: Tensor<F>, geometry: ConvGeometry },
    ConvTranspose { weight: Tensor<F>, bias: Tensor<F>, geometry: ConvGeometry },
    BatchNorm(BatchNormParams<F>),
    Activation(Activation),
    Dropout { rate: f64 },
    GaussianNoise { std: f64 },
    /// Reshape every sample to `shape` (batch axis excluded).
    Reshape { shape: Vec<usize> },
}

enum Cache<F: Scalar> {
    Input(Tensor<F>),
    Norm(BatchNormCache<F>),
    Act { input: Tensor<F>, output: Tensor<F> },
    Mask(Option<Vec<F>>),
    Shape(Vec<usize>),
    Identity,
}

/// Activations recorded by a forward pass, consumed by `backward`.
pub struct Tape<F: Scalar = f32> {
    caches: Vec<Cache<F>>,
}

impl<F: Scalar> Layer<F> {
    fn trainable(&self) -> Vec<(&'static str, &Tensor<F>)> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv { weight, bias, .. } | Layer::ConvTranspose { weight, bias, .. } => {
                vec![("weight", weight), ("bias", bias)]
            }
            Layer::BatchNorm(p) => vec![("gamma", &p.gamma), ("beta", &p.beta)],
            _ => vec![],
        }
    }

    fn trainable_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv { weight, bias, .. } | Layer::ConvTranspose { weight, bias, .. } => {
                vec![weight, bias]
            }
            Layer::BatchNorm(p) => vec![&mut p.gamma, &mut p.beta],
            _ => vec![],
        }
    }

    fn buffers(&self) -> Vec<(&'static str, &Tensor<F>)> {
        match self {
            Layer::BatchNorm(p) => vec![("running_mean", &p.running_mean), ("running_var", &p.running_var)],
            _ => vec![],
        }
    }

    fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        match self {
            Layer::BatchNorm(p) => vec![("running_mean", &mut p.running_mean), ("running_var", &mut p.running_var)],
            _ => vec![],
        }
    }
}

/// Ordered stack of named layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential<F: Scalar = f32> {
    layers: Vec<(String, Layer<F>)>,
}

impl<F: Scalar> Default for Sequential<F> {
    fn default() -> Self {
        Sequential { layers: Vec::new() }
    }
}

impl<F: Scalar> Sequential<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, layer: Layer<F>) {
        self.layers.push((name.into(), layer));
    }

    pub fn layers(&self) -> &[(String, Layer<F>)] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [(String, Layer<F>)] {
        &mut self.layers
    }

    /// Run the stack. `rng` is only drawn from when `mode.stochastic` is set.
    /// Running statistics are updated when `mode` asks for it.
    pub fn forward(&mut self, input: &Tensor<F>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<F>, Tape<F>)> {
        let (y, tape, stats) = self.run(input, mode, rng)?;
        if let NormMode::Batch { update_running: true } = mode.norm {
            for ((_, layer), s) in self.layers.iter_mut().zip(stats) {
                if let (Layer::BatchNorm(p), Some(s)) = (layer, s) {
                    fold_stats(p, &s);
                }
            }
        }
        Ok((y, tape))
    }

    /// Like [`Sequential::forward`] but never touches running statistics.
    pub fn forward_frozen(&self, input: &Tensor<F>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<F>, Tape<F>)> {
        self.run(input, mode, rng).map(|(y, tape, _)| (y, tape))
    }

    #[allow(clippy::type_complexity)]
    fn run(&self, input: &Tensor<F>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<F>, Tape<F>, Vec<Option<BatchStats<F>>>)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::with_capacity(self.layers.len());
        for (name, layer) in &self.layers {
            let (y, cache, s) = step(layer, x, mode, rng).map_err(|e| annotate(e, name))?;
            caches.push(cache);
            stats.push(s);
            x = y;
        }
        Ok((x, Tape { caches }, stats))
    }

    /// Inference pass with frozen statistics and no stochastic layers.
    pub fn infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let mut x = input.clone();
        let mut unused = Rng::seed(0);
        for (name, layer) in &self.layers {
            x = step(layer, x, Mode::INFER, &mut unused).map_err(|e| annotate(e, name))?.0;
        }
        Ok(x)
    }

    /// Back-propagate `grad_out`. Returns the input gradient and one gradient
    /// per trainable tensor, in [`Sequential::params`] order.
    pub fn backward(&self, tape: Tape<F>, grad_out: &Tensor<F>) -> Result<(Tensor<F>, Vec<Tensor<F>>)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::State("tape does not belong to this network".into()));
        }
        let mut g = grad_out.clone();
        let mut grads_rev: Vec<Tensor<F>> = Vec::new();
        for ((name, layer), cache) in self.layers.iter().zip(tape.caches).rev() {
            let (gi, mut pg) = back(layer, cache, &g).map_err(|e| annotate(e, name))?;
            pg.reverse();
            grads_rev.extend(pg);
            g = gi;
        }
        grads_rev.reverse();
        Ok((g, grads_rev))
    }

    /// Trainable tensors, in a fixed order.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.layers.iter().flat_map(|(_, l)| l.trainable().into_iter().map(|(_, t)| t)).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers.iter_mut().flat_map(|(_, l)| l.trainable_mut()).collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|(n, l)| l.trainable().into_iter().map(move |(p, _)| format!("{n}.{p}")))
            .collect()
    }

    /// Every persistent tensor (trainable and running statistics) with a dotted name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (n, l) in &self.layers {
            for (p, t) in l.trainable().into_iter().chain(l.buffers()) {
                out.push((format!("{n}.{p}"), t));
            }
        }
        out
    }

    /// Overwrite persistent tensors from `lookup`; every name must be present
    /// with a matching shape.
    pub fn load_named(&mut self, mut lookup: impl FnMut(&str) -> Option<Tensor<F>>) -> Result<()> {
        let names: Vec<String> = self.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut values = Vec::with_capacity(names.len());
        for (key, (_, current)) in names.iter().zip(self.named_tensors()) {
            let t = lookup(key).ok_or_else(|| Error::Format(format!("checkpoint lacks {key}")))?;
            if t.shape() != current.shape() {
                return Err(Error::Dimension(format!("{key}: checkpoint {:?} vs network {:?}", t.shape(), current.shape())));
            }
            values.push(t);
        }
        let mut values = values.into_iter();
        for (_, l) in self.layers.iter_mut() {
            for slot in l.trainable_mut() {
                *slot = values.next().expect("one value per trainable tensor");
            }
            for (_, slot) in l.buffers_mut() {
                *slot = values.next().expect("one value per buffer");
            }
        }
        Ok(())
    }

    pub fn cast<G: Scalar>(&self) -> Sequential<G> {
        let layers = self
            .layers
            .iter()
            .map(|(n, l)| {
                let l = match l {
                    Layer::Dense { weight, bias } => Layer::Dense { weight: weight.cast(), bias: bias.cast() },
                    Layer::Conv { weight, bias, geometry } => Layer::Conv { weight: weight.cast(), bias: bias.cast(), geometry: *geometry },
                    Layer::ConvTranspose { weight, bias, geometry } => {
                        Layer::ConvTranspose { weight: weight.cast(), bias: bias.cast(), geometry: *geometry }
                    }
                    Layer::BatchNorm(p) => Layer::BatchNorm(BatchNormParams {
                        gamma: p.gamma.cast(),
                        beta: p.beta.cast(),
                        running_mean: p.running_mean.cast(),
                        running_var: p.running_var.cast(),
                        momentum: G::of(p.momentum.as_f64()),
                        eps: G::of(p.eps.as_f64()),
                    }),
                    Layer::Activation(a) => Layer::Activation(*a),
                    Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                    Layer::GaussianNoise { std } => Layer::GaussianNoise { std: *std },
                    Layer::Reshape { shape } => Layer::Reshape { shape: shape.clone() },
                };
                (n.clone(), l)
            })
            .collect();
        Sequential { layers }
    }
}

fn annotate(e: Error, layer: &str) -> Error {
    match e {
        Error::Dimension(m) => Error::Dimension(format!("{layer}: {m}")),
        other => other,
    }
}

type Stepped<F> = (Tensor<F>, Cache<F>, Option<BatchStats<F>>);

fn step<F: Scalar>(layer: &Layer<F>, x: Tensor<F>, mode: Mode, rng: &mut Rng) -> Result<Stepped<F>> {
    let (y, cache) = match layer {
        Layer::Dense { weight, bias } => (dense(&x, weight, bias)?, Cache::Input(x)),
        Layer::Conv { weight, bias, geometry } => (conv2d(&x, weight, Some(bias), *geometry)?, Cache::Input(x)),
        Layer::ConvTranspose { weight, bias, geometry } => (conv2d_transpose(&x, weight, Some(bias), *geometry)?, Cache::Input(x)),
        Layer::BatchNorm(p) => {
            let (y, cache, stats) = normalize(&x, p, mode.norm)?;
            return Ok((y, Cache::Norm(cache), stats));
        }
        Layer::Activation(kind) => {
            let y = activate(&x, *kind);
            (y.clone(), Cache::Act { input: x, output: y })
        }
        Layer::Dropout { rate } => {
            let (y, mask) = dropout(&x, *rate, rng, mode.stochastic)?;
            (y, Cache::Mask(mask))
        }
        Layer::GaussianNoise { std } => (gaussian_noise(&x, *std, rng, mode.stochastic)?, Cache::Identity),
        Layer::Reshape { shape } => {
            let from = x.shape().to_vec();
            let mut to = vec![from[0]];
            to.extend_from_slice(shape);
            (x.reshape(&to)?, Cache::Shape(from))
        }
    };
    Ok((y, cache, None))
}

fn back<F: Scalar>(layer: &Layer<F>, cache: Cache<F>, g: &Tensor<F>) -> Result<(Tensor<F>, Vec<Tensor<F>>)> {
    Ok(match (layer, cache) {
        (Layer::Dense { weight, .. }, Cache::Input(x)) => {
            let (gi, gw, gb) = dense_backward(&x, weight, g)?;
            (gi, vec![gw, gb])
        }
        (Layer::Conv { weight, geometry, .. }, Cache::Input(x)) => {
            let (gi, gw, gb) = conv2d_backward(&x, weight, g, *geometry)?;
            (gi, vec![gw, gb])
        }
        (Layer::ConvTranspose { weight, geometry, .. }, Cache::Input(x)) => {
            let (gi, gw, gb) = conv2d_transpose_backward(&x, weight, g, *geometry)?;
            (gi, vec![gw, gb])
        }
        (Layer::BatchNorm(p), Cache::Norm(c)) => {
            let (gi, gg, gb) = batch_norm_backward(p, &c, g)?;
            (gi, vec![gg, gb])
        }
        (Layer::Activation(kind), Cache::Act { input, output }) => (activate_backward(&input, &output, g, *kind)?, vec![]),
        (Layer::Dropout { .. }, Cache::Mask(mask)) => match mask {
            Some(m) => {
                let data = g.data().iter().zip(&m).map(|(&a, &b)| a * b).collect();
                (Tensor::from_vec(g.shape().to_vec(), data)?, vec![])
            }
            None => (g.clone(), vec![]),
        },
        (Layer::GaussianNoise { .. }, Cache::Identity) => (g.clone(), vec![]),
        (Layer::Reshape { .. }, Cache::Shape(from)) => (g.clone().reshape(&from)?, vec![]),
        _ => return Err(Error::State("tape entry does not match layer".into())),
    })
}
