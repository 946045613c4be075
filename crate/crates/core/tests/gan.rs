use std::sync::OnceLock;

use flamegan::eval::{split_dataset, Representation, SplitSpec, SyntheticDataset};
use flamegan::gan::{
    build_discriminator, build_generator, classify, gen_step, load_model, mirror, read_sidecar, reverse_time,
    sample_noise, save_model, sg1_step, train_stage1, train_stage2, Classification, Discriminator, Generator,
    ModelBundle, NetSpec, TrainConfig, TrainingStage,
};
use flamegan::nn::{bce_loss, AdamState, Mode, NormMode, Rng, Tensor};
use flamegan::slicing::{build_cube, normalize_cube, Block};
use flamegan::video_io::{Frame, Label};
use flamegan::Error;

const LN2: f32 = std::f32::consts::LN_2;

fn nets(spec: &NetSpec, seed: u64) -> (Generator, Discriminator) {
    let reg = TrainConfig::default().regularization;
    let mut rng = Rng::seed(seed);
    (build_generator(spec, &reg, &mut rng).unwrap(), build_discriminator(spec, &reg, &mut rng).unwrap())
}

fn random_batch(n: usize, shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut full = vec![n];
    full.extend_from_slice(shape);
    let mut t = Tensor::zeros(&full);
    t.data_mut().iter_mut().for_each(|v| *v = rng.uniform() as f32 * 2.0 - 1.0);
    t
}

const FROZEN: Mode = Mode { stochastic: false, norm: NormMode::Batch { update_running: false } };

#[test]
fn toy_shapes() {
    let spec = NetSpec::toy();
    let (g, d) = nets(&spec, 1);
    let z = sample_noise(3, spec.z_dim, &mut Rng::seed(2));
    let x = g.generate(&z).unwrap();
    assert_eq!(x.shape(), &[3, 16, 32, 96]);
    assert!(x.data().iter().all(|v| v.abs() < 1.0));
    let p = d.score(&x).unwrap();
    assert_eq!(p.len(), 3);
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(matches!(d.score(&Tensor::zeros(&[1, 16, 32, 93])), Err(Error::Dimension(_))));
    assert!(matches!(g.generate(&Tensor::zeros(&[1, 5])), Err(Error::Dimension(_))));
}

#[test]
fn full_scale_generate_and_discriminate() {
    let spec = NetSpec::full_scale();
    let (g, d) = nets(&spec, 3);
    let x = g.generate(&sample_noise(1, 100, &mut Rng::seed(4))).unwrap();
    assert_eq!(x.shape(), &[1, 64, 128, 384]);
    let p = d.score(&x).unwrap();
    assert!(p[0] > 0.0 && p[0] < 1.0);
}

#[test]
fn unreachable_spec_is_rejected() {
    let mut spec = NetSpec::toy();
    spec.input_shape = [20, 32, 96];
    let reg = TrainConfig::default().regularization;
    assert!(matches!(build_generator::<f32>(&spec, &reg, &mut Rng::seed(0)), Err(Error::Spec(_))));
}

#[test]
fn deterministic_mode_repeats() {
    let spec = NetSpec::toy();
    let (_, mut d) = nets(&spec, 5);
    let x = random_batch(4, &spec.input_shape, &mut Rng::seed(6));
    let a = d.forward(&x, Mode::DETERMINISTIC, &mut Rng::seed(1)).unwrap().0;
    let b = d.forward(&x, Mode::DETERMINISTIC, &mut Rng::seed(2)).unwrap().0;
    assert_eq!(a, b);
    let c = d.forward(&x, Mode::TRAIN, &mut Rng::seed(1)).unwrap().0;
    let e = d.forward(&x, Mode::TRAIN, &mut Rng::seed(2)).unwrap().0;
    assert_ne!(c, e);
}

#[test]
fn checkpoint_is_bit_exact() {
    let spec = NetSpec::toy();
    let (g, d) = nets(&spec, 7);
    let config = TrainConfig::default();
    let gopt = AdamState::new(config.adam, &g.network().params());
    let dopt = AdamState::new(config.adam, &d.network().params());
    let bundle = ModelBundle { config, stage: TrainingStage::Stage1, disc: d, gen: Some(g), optimizers: Some((gopt, dopt)) };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.ckpt");
    save_model(&path, &bundle).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.checkpoint().digest(), bundle.checkpoint().digest());
    assert_eq!(back.disc, bundle.disc);
    assert_eq!(back.gen, bundle.gen);
    assert_eq!(read_sidecar(&path).unwrap().checkpoint_sha256, bundle.checkpoint().digest());

    let x = random_batch(2, &spec.input_shape, &mut Rng::seed(8));
    assert_eq!(back.disc.score(&x).unwrap(), bundle.disc.score(&x).unwrap());
}

fn frozen_loss(d: &Discriminator, g: &Generator, real: &Tensor, z: &Tensor) -> f32 {
    let fake = g.network().forward_frozen(z, FROZEN, &mut Rng::seed(0)).unwrap().0;
    let m = real.dim(0);
    let pr = d.network().forward_frozen(real, FROZEN, &mut Rng::seed(0)).unwrap().0;
    let pf = d.network().forward_frozen(&fake, FROZEN, &mut Rng::seed(0)).unwrap().0;
    bce_loss(&pr, &vec![1.0; m]).unwrap().0 + bce_loss(&pf, &vec![0.0; m]).unwrap().0
}

#[test]
fn sg1_step_at_initialization() {
    let spec = NetSpec::toy();
    let (g, mut d) = nets(&spec, 9);
    let mut rng = Rng::seed(10);
    let real = random_batch(8, &spec.input_shape, &mut rng);
    let z = sample_noise(8, spec.z_dim, &mut rng);
    let mut opt = AdamState::new(TrainConfig::default().adam, &d.network().params());

    let before = frozen_loss(&d, &g, &real, &z);
    let gen_digest = g.to_checkpoint().digest();
    let out = sg1_step(&mut d, &g, &real, &z, &mut opt, false, &mut rng).unwrap();
    assert!((out.disc_loss - 2.0 * LN2).abs() < 0.15, "{}", out.disc_loss);
    assert!((out.disc_loss - before).abs() < 1e-4);
    let after = frozen_loss(&d, &g, &real, &z);
    assert!(after <= before, "{before} -> {after}");
    assert_eq!(g.to_checkpoint().digest(), gen_digest);
}

#[test]
fn sg1_step_moves_every_discriminator_tensor() {
    let spec = NetSpec::toy();
    let (g, mut d) = nets(&spec, 11);
    let mut rng = Rng::seed(12);
    let real = random_batch(2, &spec.input_shape, &mut rng);
    let z = sample_noise(2, spec.z_dim, &mut rng);
    let mut opt = AdamState::new(TrainConfig::default().adam, &d.network().params());
    let before: Vec<Tensor> = d.network().params().into_iter().cloned().collect();
    sg1_step(&mut d, &g, &real, &z, &mut opt, true, &mut rng).unwrap();
    for (name, (old, new)) in d.network().param_names().iter().zip(before.iter().zip(d.network().params())) {
        assert_ne!(old, new, "{name} did not move");
    }
    let bad_z = sample_noise(3, spec.z_dim, &mut rng);
    assert!(matches!(sg1_step(&mut d, &g, &real, &bad_z, &mut opt, true, &mut rng), Err(Error::Dimension(_))));
}

#[test]
fn gen_step_at_initialization() {
    let spec = NetSpec::toy();
    let (mut g, d) = nets(&spec, 13);
    let mut rng = Rng::seed(14);
    let z = sample_noise(8, spec.z_dim, &mut rng);
    let mut opt = AdamState::new(TrainConfig::default().adam, &g.network().params());
    let mean_fake = |g: &Generator| {
        let fake = g.network().forward_frozen(&z, FROZEN, &mut Rng::seed(0)).unwrap().0;
        d.network().forward_frozen(&fake, FROZEN, &mut Rng::seed(0)).unwrap().0.mean()
    };
    let disc_digest = d.to_checkpoint().digest();
    let before = mean_fake(&g);
    let loss = gen_step(&d, &mut g, &z, &mut opt, false, &mut rng).unwrap();
    assert!((loss - LN2).abs() < 0.1, "{loss}");
    assert!(mean_fake(&g) >= before);
    assert_eq!(d.to_checkpoint().digest(), disc_digest);
}

fn tiny_config(steps: usize) -> TrainConfig {
    TrainConfig { batch_size: 4, refine_batch_size: 2, stage1_steps: steps, stage2_steps: steps, seed: 3, ..TrainConfig::default() }
}

#[test]
fn stage1_is_reproducible() {
    let spec = NetSpec::toy();
    let mut rng = Rng::seed(15);
    let flame: Vec<Tensor> = (0..6).map(|_| random_batch(1, &spec.input_shape, &mut rng).reshape(&spec.input_shape).unwrap()).collect();
    let a = train_stage1(&flame, &spec, &tiny_config(4)).unwrap();
    let b = train_stage1(&flame, &spec, &tiny_config(4)).unwrap();
    assert_eq!(a.history.len(), 4);
    assert_eq!(a.history, b.history);
    assert!(a.history.iter().all(|r| r.disc_loss.is_finite() && r.gen_loss.is_finite()));
    assert_eq!(a.disc.to_checkpoint().digest(), b.disc.to_checkpoint().digest());
    assert_eq!(a.gen.to_checkpoint().digest(), b.gen.to_checkpoint().digest());

    let c = train_stage1(&flame, &spec, &TrainConfig { seed: 4, ..tiny_config(4) }).unwrap();
    assert_ne!(a.disc.to_checkpoint().digest(), c.disc.to_checkpoint().digest());

    let wrong = vec![Tensor::zeros(&[16, 32, 90])];
    assert!(matches!(train_stage1(&wrong, &spec, &tiny_config(1)), Err(Error::Dimension(_))));
}

#[test]
fn stage2_without_steps_is_identity() {
    let spec = NetSpec::toy();
    let (_, d) = nets(&spec, 16);
    let mut rng = Rng::seed(17);
    let mut one = || random_batch(1, &spec.input_shape, &mut rng).reshape(&spec.input_shape).unwrap();
    let flame = vec![one(), one()];
    let other = vec![one(), one()];
    let out = train_stage2(d.clone(), &flame, &other, &tiny_config(0), None).unwrap();
    assert_eq!(out.disc, d);
    assert!(out.history.is_empty());

    let out = train_stage2(d.clone(), &flame, &other, &tiny_config(3), None).unwrap();
    assert_eq!(out.history.len(), 3);
    assert_ne!(out.disc, d);
}

fn uniform_block(t: usize, s: usize, v: u8) -> Block {
    Block::new((0..t).map(|_| Frame::filled(s, s, [v, v, v]).unwrap()).collect(), 0.0, "u").unwrap()
}

#[test]
fn classification_rules() {
    assert_eq!(Classification::from_score(0.7, 0.5).label, Label::Flame);
    assert_eq!(Classification::from_score(0.3, 0.5).label, Label::Nonflame);
    assert_eq!(Classification::from_score(0.5, 0.5).label, Label::Nonflame);

    let spec = NetSpec::toy();
    let (_, d) = nets(&spec, 18);
    let raw = build_cube(&uniform_block(16, 32, 100));
    assert!(matches!(classify(&d, &raw, 0.5), Err(Error::State(_))));
    let norm = normalize_cube(&raw).unwrap();
    let c = classify(&d, &norm, 0.5).unwrap();
    assert_eq!(c, Classification::from_score(c.score, 0.5));
    assert_eq!(classify(&d, &norm, 0.0).unwrap().label, Label::Flame);
    assert_eq!(classify(&d, &norm, 1.0).unwrap().label, Label::Nonflame);
    let small = normalize_cube(&build_cube(&uniform_block(8, 32, 100))).unwrap();
    assert!(matches!(classify(&d, &small, 0.5), Err(Error::Config(_))));
}

fn block_from(frames: Vec<Frame>) -> Block {
    Block::new(frames, 0.0, "m").unwrap()
}

fn mirrored_frame(f: &Frame) -> Frame {
    let s = f.width();
    let mut px = Vec::with_capacity(s * s * 3);
    for y in 0..s {
        for x in (0..s).rev() {
            px.extend_from_slice(&f.pixel(y, x));
        }
    }
    Frame::new(s, f.height(), px).unwrap()
}

#[test]
fn augmentations_match_frame_level_oracles() {
    let mut rng = Rng::seed(19);
    let frames: Vec<Frame> =
        (0..5).map(|_| Frame::new(4, 4, (0..48).map(|_| rng.below(256) as u8).collect()).unwrap()).collect();
    let cube_of = |fs: Vec<Frame>| normalize_cube(&build_cube(&block_from(fs))).unwrap().to_tensor().unwrap();
    let x = cube_of(frames.clone());

    assert_eq!(mirror(&x, true), cube_of(frames.iter().map(mirrored_frame).collect()));
    assert_eq!(reverse_time(&x), cube_of(frames.iter().rev().cloned().collect()));
    assert_eq!(mirror(&mirror(&x, true), true), x);

    let img = |f: &Frame| Tensor::from_vec(vec![4, 4, 3], f.pixels().iter().map(|&v| v as f32).collect()).unwrap();
    assert_eq!(mirror(&img(&frames[0]), false), img(&mirrored_frame(&frames[0])));
}

// Shared trained toy model for the behavioural checks below.
struct Trained {
    stage1: Discriminator,
    refined: Discriminator,
    held_flame: Vec<Tensor>,
    held_other: Vec<Tensor>,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = SyntheticDataset { flame_clips: 40, nonflame_clips: 30, ..SyntheticDataset::toy(77) }.build().unwrap();
        let [train, _, test] = split_dataset(&data, &SplitSpec::default()).unwrap();
        let inputs = |m: &flamegan::eval::DatasetManifest, l| m.inputs(l, Representation::Slices).unwrap();
        let config = TrainConfig { stage1_steps: 150, stage2_steps: 200, validate_every: 0, ..TrainConfig::default() };
        let spec = NetSpec::toy();
        let flame = inputs(&train, Label::Flame);
        let other = inputs(&train, Label::Nonflame);
        let s1 = train_stage1(&flame, &spec, &config).unwrap();
        let refined = train_stage2(s1.disc.clone(), &flame, &other, &config, None).unwrap();
        Trained {
            stage1: s1.disc,
            refined: refined.disc,
            held_flame: inputs(&test, Label::Flame),
            held_other: inputs(&test, Label::Nonflame),
        }
    })
}

fn mean_score(d: &Discriminator, xs: &[Tensor]) -> f32 {
    let refs: Vec<&Tensor> = xs.iter().collect();
    let s = d.score(&Tensor::stack(&refs).unwrap()).unwrap();
    s.iter().sum::<f32>() / s.len() as f32
}

#[test]
fn stage1_discriminator_accepts_held_out_flame() {
    let t = trained();
    let m = mean_score(&t.stage1, &t.held_flame);
    assert!(m > 0.6, "mean D(x) on held-out flame {m}");
}

#[test]
fn refined_discriminator_separates_held_out_clips() {
    let t = trained();
    let flame = mean_score(&t.refined, &t.held_flame);
    let other = mean_score(&t.refined, &t.held_other);
    assert!(flame > 0.5, "mean D(x) {flame}");
    assert!(other < 0.5, "mean D(y) {other}");
}
