//! Stage-1 adversarial training, stage-2 refinement and classification.

use super::config::{NetSpec, TrainConfig};
use super::networks::{build_discriminator, build_generator, Discriminator, Generator};
use crate::error::{Error, Result};
use crate::nn::{adam_step, bce_loss, AdamConfig, AdamState, Mode, NormMode, Rng, Tensor};
use crate::slicing::SliceCube;
use crate::video_io::Label;

/// Outcome of one discriminator update on real flame cubes and generated cubes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sg1Losses {
    /// `−(1/M) Σ [ln D(x) + ln(1 − D(G(z)))]`
    pub disc_loss: f32,
    pub mean_real: f32,
    pub mean_fake: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage1Record {
    pub disc_loss: f32,
    pub gen_loss: f32,
    pub mean_real: f32,
    pub mean_fake: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage2Record {
    pub loss: f32,
    pub mean_flame: f32,
    pub mean_nonflame: f32,
    /// Balanced validation accuracy when evaluated at this step.
    pub validation: Option<f64>,
}

fn train_mode(stochastic: bool, update_running: bool) -> Mode {
    Mode { stochastic, norm: NormMode::Batch { update_running } }
}

fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape()[1..] != b.shape()[1..] {
        return Err(Error::Dimension(format!("cannot concatenate {:?} and {:?}", a.shape(), b.shape())));
    }
    let mut shape = a.shape().to_vec();
    shape[0] += b.dim(0);
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(shape, data)
}

fn mean(v: &[f32]) -> f32 {
    v.iter().sum::<f32>() / v.len() as f32
}

/// `n` standard-normal noise vectors.
pub fn sample_noise(n: usize, z_dim: usize, rng: &mut Rng) -> Tensor {
    let mut z = Tensor::zeros(&[n, z_dim]);
    z.data_mut().iter_mut().for_each(|v| *v = rng.normal(1.0));
    z
}

/// Binary cross-entropy over a stacked `[positives; negatives]` batch, scaled
/// so the loss is the sum of the two class means.
fn paired_update(
    disc: &mut Discriminator,
    batch: &Tensor,
    positives: usize,
    opt: &mut AdamState,
    stochastic: bool,
    rng: &mut Rng,
) -> Result<(f32, f32, f32)> {
    let n = batch.dim(0);
    if positives == 0 || positives * 2 != n {
        return Err(Error::Dimension(format!("paired batch needs equal halves, got {positives} of {n}")));
    }
    let (probs, tape) = disc.forward(batch, train_mode(stochastic, true), rng)?;
    let targets: Vec<f32> = (0..n).map(|i| if i < positives { 1.0 } else { 0.0 }).collect();
    let (loss, grad) = bce_loss(&probs, &targets)?;
    let grad = grad.map(|g| 2.0 * g);
    let (_, grads) = disc.backward(tape, &grad)?;
    adam_step(&mut disc.network_mut().params_mut(), &grads, opt)?;
    let p = probs.data();
    Ok((2.0 * loss, mean(&p[..positives]), mean(&p[positives..])))
}

/// Discriminator ascent on `(1/M) Σ [ln D(x_i) + ln(1 − D(G(z_i)))]`,
/// implemented as descent on the matching cross-entropy. The generator is
/// only sampled; neither its parameters nor its running statistics change.
pub fn sg1_step(
    disc: &mut Discriminator,
    gen: &Generator,
    flame_batch: &Tensor,
    z_batch: &Tensor,
    disc_opt: &mut AdamState,
    stochastic: bool,
    rng: &mut Rng,
) -> Result<Sg1Losses> {
    let m = flame_batch.dim(0);
    if z_batch.rank() != 2 || z_batch.dim(0) != m {
        return Err(Error::Dimension(format!("{m} flame cubes but noise batch {:?}", z_batch.shape())));
    }
    let (fake, _) = gen.network().forward_frozen(z_batch, train_mode(stochastic, false), rng)?;
    let batch = concat(flame_batch, &fake)?;
    let (disc_loss, mean_real, mean_fake) = paired_update(disc, &batch, m, disc_opt, stochastic, rng)?;
    Ok(Sg1Losses { disc_loss, mean_real, mean_fake })
}

/// Generator descent on the non-saturating objective `−(1/M) Σ ln D(G(z_i))`.
/// The discriminator is read only.
pub fn gen_step(
    disc: &Discriminator,
    gen: &mut Generator,
    z_batch: &Tensor,
    gen_opt: &mut AdamState,
    stochastic: bool,
    rng: &mut Rng,
) -> Result<f32> {
    let (fake, gen_tape) = gen.forward(z_batch, train_mode(stochastic, true), rng)?;
    let (probs, disc_tape) = disc.network().forward_frozen(&fake, train_mode(stochastic, false), rng)?;
    let (loss, grad) = bce_loss(&probs, &vec![1.0; probs.len()])?;
    let (grad_fake, _) = disc.backward(disc_tape, &grad)?;
    let (_, grads) = gen.backward(gen_tape, &grad_fake)?;
    adam_step(&mut gen.network_mut().params_mut(), &grads, gen_opt)?;
    Ok(loss)
}

/// Left-right mirror of an `[H, W, C]` image, or of the frames behind a
/// `[T, S, 3S]` slice cube (reversing the column groups).
pub fn mirror(x: &Tensor, cube: bool) -> Tensor {
    let (w, c) = (x.dim(1), x.dim(2));
    let row = if cube { c } else { w * c };
    let mut out = Tensor::zeros(x.shape());
    let (src, dst) = (x.data(), out.data_mut());
    for (row_in, row_out) in src.chunks_exact(row).zip(dst.chunks_exact_mut(row)) {
        if cube {
            for (g_in, g_out) in row_in.chunks_exact(3).zip(row_out.chunks_exact_mut(3).rev()) {
                g_out.copy_from_slice(g_in);
            }
        } else {
            for (p_in, p_out) in row_in.chunks_exact(c).zip(row_out.chunks_exact_mut(c).rev()) {
                p_out.copy_from_slice(p_in);
            }
        }
    }
    out
}

/// Reverse a slice cube along time.
pub fn reverse_time(x: &Tensor) -> Tensor {
    let row = x.len() / x.dim(0);
    let data: Vec<f32> = x.data().chunks_exact(row).rev().flatten().copied().collect();
    Tensor::from_vec(x.shape().to_vec(), data).expect("same shape")
}

/// Reshuffled pass over a dataset, one minibatch at a time.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    augment: Option<bool>,
}

impl Sampler {
    /// `augment` is `Some(is_cube)` to enable random mirroring and time reversal.
    fn new(len: usize, augment: Option<bool>) -> Self {
        Sampler { order: (0..len).collect(), pos: len, augment }
    }

    fn batch(&mut self, data: &[Tensor], n: usize, rng: &mut Rng) -> Result<Tensor> {
        let mut picked: Vec<std::borrow::Cow<'_, Tensor>> = Vec::with_capacity(n);
        while picked.len() < n {
            if self.pos == self.order.len() {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            let x = &data[self.order[self.pos]];
            self.pos += 1;
            let Some(cube) = self.augment else {
                picked.push(std::borrow::Cow::Borrowed(x));
                continue;
            };
            let flip = rng.below(2) == 1;
            let reverse = cube && rng.below(2) == 1;
            let mut y = std::borrow::Cow::Borrowed(x);
            if flip {
                y = std::borrow::Cow::Owned(mirror(&y, cube));
            }
            if reverse {
                y = std::borrow::Cow::Owned(reverse_time(&y));
            }
            picked.push(y);
        }
        let refs: Vec<&Tensor> = picked.iter().map(|t| t.as_ref()).collect();
        Tensor::stack(&refs)
    }
}

fn augmentation(spec: &NetSpec, config: &TrainConfig) -> Option<bool> {
    config.augment.then(|| spec.cube_dims().is_some())
}

/// Stage-1 state: both networks and their optimizers.
pub struct Trainer {
    pub gen: Generator,
    pub disc: Discriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub config: TrainConfig,
    rng: Rng,
}

impl Trainer {
    pub fn new(spec: &NetSpec, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed(config.seed);
        let gen: Generator = build_generator(spec, &config.regularization, &mut rng.fork())?;
        let disc: Discriminator = build_discriminator(spec, &config.regularization, &mut rng.fork())?;
        let gen_opt = AdamState::new(config.adam, &gen.network().params());
        let disc_opt = AdamState::new(config.adam, &disc.network().params());
        Ok(Trainer { gen, disc, gen_opt, disc_opt, config: config.clone(), rng })
    }

    pub fn rng(&mut self) -> &mut Rng {
        &mut self.rng
    }

    /// One `sg1_step` followed by one `gen_step` with fresh noise.
    pub fn step(&mut self, flame_batch: &Tensor) -> Result<Stage1Record> {
        let m = flame_batch.dim(0);
        let stochastic = !self.config.deterministic;
        let z = sample_noise(m, self.gen.spec().z_dim, &mut self.rng);
        let d = sg1_step(&mut self.disc, &self.gen, flame_batch, &z, &mut self.disc_opt, stochastic, &mut self.rng)?;
        let z = sample_noise(m, self.gen.spec().z_dim, &mut self.rng);
        let gen_loss = gen_step(&self.disc, &mut self.gen, &z, &mut self.gen_opt, stochastic, &mut self.rng)?;
        Ok(Stage1Record { disc_loss: d.disc_loss, gen_loss, mean_real: d.mean_real, mean_fake: d.mean_fake })
    }
}

pub struct Stage1Outcome {
    pub gen: Generator,
    pub disc: Discriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub history: Vec<Stage1Record>,
}

/// Adversarial training on flame cubes only (each `[H, W, C]`, normalized).
pub fn train_stage1(flame: &[Tensor], spec: &NetSpec, config: &TrainConfig) -> Result<Stage1Outcome> {
    if flame.is_empty() {
        return Err(Error::EmptyInput("stage 1 needs flame cubes".into()));
    }
    check_samples(flame, spec)?;
    let mut trainer = Trainer::new(spec, config)?;
    let mut sampler = Sampler::new(flame.len(), augmentation(spec, config));
    let mut history = Vec::with_capacity(config.stage1_steps);
    for _ in 0..config.stage1_steps {
        let batch = sampler.batch(flame, config.batch_size, &mut trainer.rng)?;
        history.push(trainer.step(&batch)?);
    }
    let Trainer { gen, disc, gen_opt, disc_opt, .. } = trainer;
    Ok(Stage1Outcome { gen, disc, gen_opt, disc_opt, history })
}

fn check_samples(samples: &[Tensor], spec: &NetSpec) -> Result<()> {
    match samples.iter().find(|t| t.shape() != spec.input_shape) {
        Some(t) => Err(Error::Dimension(format!("sample shape {:?} does not match network input {:?}", t.shape(), spec.input_shape))),
        None => Ok(()),
    }
}

pub struct Stage2Outcome {
    pub disc: Discriminator,
    pub disc_opt: AdamState,
    pub history: Vec<Stage2Record>,
    /// Step whose parameters were kept, when validation selection ran.
    pub selected_step: Option<usize>,
}

/// Balanced accuracy at the 0.5 decision threshold.
fn balanced_accuracy(disc: &Discriminator, flame: &[Tensor], nonflame: &[Tensor]) -> Result<f64> {
    let rate = |set: &[Tensor], positive: bool| -> Result<f64> {
        let mut hits = 0usize;
        for chunk in set.chunks(32) {
            let refs: Vec<&Tensor> = chunk.iter().collect();
            let scores = disc.score(&Tensor::stack(&refs)?)?;
            hits += scores.iter().filter(|&&s| (s > 0.5) == positive).count();
        }
        Ok(hits as f64 / set.len() as f64)
    };
    Ok(0.5 * (rate(flame, true)? + rate(nonflame, false)?))
}

fn refine_loop(
    mut disc: Discriminator,
    flame: &[Tensor],
    nonflame: &[Tensor],
    steps: usize,
    adam: AdamConfig,
    config: &TrainConfig,
    validation: Option<(&[Tensor], &[Tensor])>,
    rng: &mut Rng,
) -> Result<Stage2Outcome> {
    if nonflame.is_empty() {
        return Err(Error::EmptyInput("refinement needs non-flame cubes".into()));
    }
    if flame.is_empty() {
        return Err(Error::EmptyInput("refinement needs flame cubes".into()));
    }
    check_samples(flame, disc.spec())?;
    check_samples(nonflame, disc.spec())?;
    let mut opt = AdamState::new(adam, &disc.network().params());
    let l = config.refine_batch_size;
    let aug = augmentation(disc.spec(), config);
    let (mut flame_sampler, mut other_sampler) = (Sampler::new(flame.len(), aug), Sampler::new(nonflame.len(), aug));
    let validation = validation.filter(|(f, n)| config.validate_every > 0 && !f.is_empty() && !n.is_empty());
    let mut best: Option<(f64, usize, Discriminator)> = None;
    let mut history = Vec::with_capacity(steps);

    for step in 0..steps {
        let batch = concat(&flame_sampler.batch(flame, l, rng)?, &other_sampler.batch(nonflame, l, rng)?)?;
        let (loss, mean_flame, mean_nonflame) = paired_update(&mut disc, &batch, l, &mut opt, !config.deterministic, rng)?;
        let mut record = Stage2Record { loss, mean_flame, mean_nonflame, validation: None };
        if let Some((vf, vn)) = validation {
            if (step + 1) % config.validate_every == 0 || step + 1 == steps {
                let acc = balanced_accuracy(&disc, vf, vn)?;
                record.validation = Some(acc);
                if best.as_ref().map_or(true, |(b, _, _)| acc >= *b) {
                    best = Some((acc, step + 1, disc.clone()));
                }
            }
        }
        history.push(record);
    }
    let (disc, selected_step) = match best {
        Some((_, step, d)) => (d, Some(step)),
        None => (disc, None),
    };
    Ok(Stage2Outcome { disc, disc_opt: opt, history, selected_step })
}

/// Refine a stage-1 discriminator with real non-flame cubes in the negative
/// slot: descent on the cross-entropy matching
/// `(1/L) Σ [ln D(x_i) + ln(1 − D(y_i))]`. No generator is involved.
///
/// With `validation = Some((flame, nonflame))` and `config.validate_every > 0`
/// the parameters with the best balanced validation accuracy are returned.
pub fn train_stage2(
    disc: Discriminator,
    flame: &[Tensor],
    nonflame: &[Tensor],
    config: &TrainConfig,
    validation: Option<(&[Tensor], &[Tensor])>,
) -> Result<Stage2Outcome> {
    config.validate()?;
    let mut rng = Rng::seed(config.seed ^ 0x5EED_0002);
    refine_loop(disc, flame, nonflame, config.stage2_steps, config.refine_adam, config, validation, &mut rng)
}

/// Plain supervised training of a freshly initialized discriminator, with as
/// many updates as stage 1 and stage 2 together. No generator is built.
pub fn train_supervised(
    spec: &NetSpec,
    flame: &[Tensor],
    nonflame: &[Tensor],
    config: &TrainConfig,
    validation: Option<(&[Tensor], &[Tensor])>,
) -> Result<Stage2Outcome> {
    config.validate()?;
    let mut rng = Rng::seed(config.seed);
    let _generator_stream = rng.fork();
    let disc = build_discriminator(spec, &config.regularization, &mut rng.fork())?;
    let steps = config.stage1_steps + config.stage2_steps;
    refine_loop(disc, flame, nonflame, steps, config.adam, config, validation, &mut rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub label: Label,
    pub score: f32,
}

impl Classification {
    /// Flame iff `score > threshold`; a tie goes to non-flame.
    pub fn from_score(score: f32, threshold: f32) -> Self {
        let label = if score > threshold { Label::Flame } else { Label::Nonflame };
        Classification { label, score }
    }
}

/// Score a normalized cube with an inference-mode discriminator.
pub fn classify(disc: &Discriminator, cube: &SliceCube, threshold: f32) -> Result<Classification> {
    if !cube.is_normalized() {
        return Err(Error::State("classify needs a normalized cube".into()));
    }
    if cube.shape() != disc.spec().input_shape {
        return Err(Error::Config(format!(
            "model expects {:?} input, cube is {:?}",
            disc.spec().input_shape,
            cube.shape()
        )));
    }
    let x = cube.to_tensor()?;
    let batch = Tensor::stack(&[&x])?;
    let score = disc.score(&batch)?[0];
    Ok(Classification::from_score(score, threshold))
}
