use flamegan::nn::checkpoint::Checkpoint;
use flamegan::nn::grad_check::{central_difference, grad_check, grad_check_network};
use flamegan::nn::{
    activate, activate_backward, adam_step, batch_norm, batch_norm_backward, bce_loss, conv2d, conv2d_backward,
    conv2d_transpose, dense, dense_backward, dropout, fan_in, gaussian_noise, msra_init, Activation, AdamConfig,
    AdamState, BatchNormParams, ConvGeometry, Layer, Mode, NormMode, Rng, Sequential, Tensor,
};
use flamegan::Error;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = rng.uniform() * 2.0 - 1.0);
    t
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

#[test]
fn unit_kernel_is_identity() {
    let mut rng = Rng::seed(1);
    let x = random(&[2, 5, 5, 1], &mut rng);
    let w = Tensor::full(&[1, 1, 1, 1], 1.0);
    assert_eq!(conv2d(&x, &w, None, ConvGeometry::new(1, 1, 0)).unwrap(), x);
}

#[test]
fn ones_kernel_sums_window() {
    let x = Tensor::<f64>::full(&[1, 3, 3, 1], 1.0);
    let w = Tensor::full(&[3, 3, 1, 1], 1.0);
    let y = conv2d(&x, &w, None, ConvGeometry::new(3, 1, 0)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[9.0]);

    let padded = conv2d(&x, &w, Some(&Tensor::full(&[1], 0.5)), ConvGeometry::new(3, 1, 1)).unwrap();
    assert_eq!(padded.data(), &[4.5, 6.5, 4.5, 6.5, 9.5, 6.5, 4.5, 6.5, 4.5]);
}

// Brute-force six-nested-loop reference.
fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, g: ConvGeometry) -> Tensor<f64> {
    let [n, h, wd, ci] = x.shape().try_into().unwrap();
    let co = w.dim(3);
    let (oh, ow) = (g.conv_out(h).unwrap(), g.conv_out(wd).unwrap());
    let mut out = Tensor::zeros(&[n, oh, ow, co]);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..co {
                    let mut acc = 0.0;
                    for ky in 0..g.kernel {
                        for kx in 0..g.kernel {
                            let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for c in 0..ci {
                                acc += x.data()[((b * h + iy as usize) * wd + ix as usize) * ci + c]
                                    * w.data()[((ky * g.kernel + kx) * ci + c) * co + o];
                            }
                        }
                    }
                    out.data_mut()[((b * oh + oy) * ow + ox) * co + o] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_reference_and_differences() {
    let mut rng = Rng::seed(17);
    for g in [ConvGeometry::new(3, 1, 1), ConvGeometry::new(4, 2, 1), ConvGeometry::new(5, 2, 2)] {
        let x = random(&[2, 8, 7, 3], &mut rng);
        let w = random(&[g.kernel, g.kernel, 3, 4], &mut rng);
        let y = conv2d(&x, &w, None, g).unwrap();
        let want = conv_oracle(&x, &w, g);
        assert!(y.data().iter().zip(want.data()).all(|(a, b)| (a - b).abs() < 1e-12));

        let r = random(y.shape(), &mut rng);
        let (gx, gw, gb) = conv2d_backward(&x, &w, &r, g).unwrap();
        let fx = |v: &[f64]| {
            let x = Tensor::from_vec(x.shape().to_vec(), v.to_vec()).unwrap();
            conv2d(&x, &w, None, g).unwrap().dot(&r)
        };
        assert!(grad_check(fx, x.data(), gx.data(), 1e-5, None).max_rel_error < 1e-6);
        let fw = |v: &[f64]| {
            let w = Tensor::from_vec(w.shape().to_vec(), v.to_vec()).unwrap();
            conv2d(&x, &w, None, g).unwrap().dot(&r)
        };
        assert!(grad_check(fw, w.data(), gw.data(), 1e-5, None).max_rel_error < 1e-6);
        let sums: Vec<f64> = (0..4).map(|o| r.data().iter().skip(o).step_by(4).sum()).collect();
        assert!(gb.data().iter().zip(&sums).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn transpose_is_the_adjoint() {
    let mut rng = Rng::seed(19);
    for g in [ConvGeometry::new(4, 2, 1), ConvGeometry::new(3, 1, 1), ConvGeometry::new(5, 3, 0)] {
        let x = random(&[2, 9, 9, 3], &mut rng);
        let w = random(&[g.kernel, g.kernel, 3, 2], &mut rng);
        let y = conv2d(&x, &w, None, g).unwrap();
        let r = random(y.shape(), &mut rng);
        let back = conv2d_transpose(&r, &w, None, g).unwrap();
        if back.shape() != x.shape() {
            continue;
        }
        let lhs = y.dot(&r);
        let rhs = x.dot(&back);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn transpose_doubles_extent() {
    let g = ConvGeometry::new(4, 2, 1);
    let x = Tensor::<f64>::full(&[1, 4, 4, 2], 1.0);
    let w = Tensor::full(&[4, 4, 5, 2], 0.1);
    assert_eq!(conv2d_transpose(&x, &w, None, g).unwrap().shape(), &[1, 8, 8, 5]);
    assert_eq!(g.transpose_out(4).unwrap(), 8);
    assert_eq!(g.conv_out(8).unwrap(), 4);
}

#[test]
fn conv_shape_errors() {
    let x = Tensor::<f64>::zeros(&[1, 4, 4, 2]);
    assert!(matches!(conv2d(&x, &Tensor::zeros(&[3, 3, 3, 1]), None, ConvGeometry::new(3, 1, 1)), Err(Error::Dimension(_))));
    assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 2, 1]), None, ConvGeometry::new(3, 0, 1)).is_err());
}

#[test]
fn dense_examples() {
    let x = Tensor::<f64>::from_vec(vec![2, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
    let w = Tensor::from_vec(vec![2, 3], vec![1.0, 0.0, 2.0, 0.0, 1.0, -1.0]).unwrap();
    let b = Tensor::from_vec(vec![3], vec![0.5, 0.0, 1.0]).unwrap();
    let y = dense(&x, &w, &b).unwrap();
    assert_eq!(y.data(), &[1.5, 2.0, 1.0, -0.5, 0.5, -1.5]);

    let mut rng = Rng::seed(3);
    let x = random(&[3, 2, 2], &mut rng);
    let w = random(&[4, 5], &mut rng);
    let b = random(&[5], &mut rng);
    let r = random(&[3, 5], &mut rng);
    let (gx, gw, _) = dense_backward(&x, &w, &r).unwrap();
    assert_eq!(gx.shape(), &[3, 2, 2]);
    let fx = |v: &[f64]| dense(&Tensor::from_vec(vec![3, 2, 2], v.to_vec()).unwrap(), &w, &b).unwrap().dot(&r);
    assert!(grad_check(fx, x.data(), gx.data(), 1e-6, None).max_rel_error < 1e-7);
    let fw = |v: &[f64]| dense(&x, &Tensor::from_vec(vec![4, 5], v.to_vec()).unwrap(), &b).unwrap().dot(&r);
    assert!(grad_check(fw, w.data(), gw.data(), 1e-6, None).max_rel_error < 1e-7);
}

#[test]
fn batch_norm_standardizes() {
    let mut rng = Rng::seed(5);
    let x = random(&[16, 3, 3, 4], &mut rng).map(|v| 3.0 * v + 2.0);
    let mut p = BatchNormParams::<f64>::new(4, 0.9, 1e-5);
    let (y, _) = batch_norm(&x, &mut p, NormMode::Batch { update_running: true }).unwrap();
    for c in 0..4 {
        let col: Vec<f64> = y.data().iter().skip(c).step_by(4).copied().collect();
        let (m, v) = mean_var(&col);
        assert!(m.abs() < 1e-10);
        assert!((v - 1.0).abs() < 1e-3);
    }
    assert_ne!(p.running_mean.data(), &[0.0; 4]);

    let mut frozen = BatchNormParams::<f64>::new(4, 0.9, 1e-5);
    batch_norm(&x, &mut frozen, NormMode::Batch { update_running: false }).unwrap();
    assert_eq!(frozen, BatchNormParams::new(4, 0.9, 1e-5));
}

#[test]
fn constant_channel_maps_to_shift() {
    let x = Tensor::<f64>::full(&[8, 2], 4.0);
    let mut p = BatchNormParams::<f64>::new(2, 0.9, 1e-5);
    p.beta = Tensor::from_vec(vec![2], vec![0.25, -1.0]).unwrap();
    let (y, _) = batch_norm(&x, &mut p, NormMode::Batch { update_running: false }).unwrap();
    assert!(y.data().chunks(2).all(|r| r == [0.25, -1.0]));
}

#[test]
fn batch_norm_gradient() {
    let mut rng = Rng::seed(6);
    let x = random(&[5, 3], &mut rng);
    let mut p = BatchNormParams::<f64>::new(3, 0.9, 1e-5);
    p.gamma = random(&[3], &mut rng);
    let r = random(&[5, 3], &mut rng);
    let mode = NormMode::Batch { update_running: false };
    let (_, cache) = batch_norm(&x, &mut p.clone(), mode).unwrap();
    let (gx, dgamma, dbeta) = batch_norm_backward(&p, &cache, &r).unwrap();
    let f = |v: &[f64]| batch_norm(&Tensor::from_vec(vec![5, 3], v.to_vec()).unwrap(), &mut p.clone(), mode).unwrap().0.dot(&r);
    assert!(grad_check(f, x.data(), gx.data(), 1e-5, None).max_rel_error < 1e-3);
    let fg = |v: &[f64]| {
        let mut q = p.clone();
        q.gamma = Tensor::from_vec(vec![3], v.to_vec()).unwrap();
        batch_norm(&x, &mut q, mode).unwrap().0.dot(&r)
    };
    assert!(grad_check(fg, p.gamma.data(), dgamma.data(), 1e-5, None).max_rel_error < 1e-3);
    let sums: Vec<f64> = (0..3).map(|c| r.data().iter().skip(c).step_by(3).sum()).collect();
    assert!(dbeta.data().iter().zip(&sums).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn batch_norm_modes() {
    let mut p = BatchNormParams::<f64>::new(2, 0.9, 1e-5);
    let one = Tensor::<f64>::zeros(&[1, 2]);
    assert!(matches!(batch_norm(&one, &mut p, NormMode::Batch { update_running: true }), Err(Error::Batch(_))));

    p.running_mean = Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap();
    p.running_var = Tensor::from_vec(vec![2], vec![4.0, 0.25]).unwrap();
    p.gamma = Tensor::from_vec(vec![2], vec![2.0, 1.0]).unwrap();
    let x = Tensor::<f64>::from_vec(vec![1, 2], vec![3.0, -1.0]).unwrap();
    let (y, _) = batch_norm(&x, &mut p, NormMode::Running).unwrap();
    let want = [2.0 * (3.0 - 1.0) / (4.0f64 + 1e-5).sqrt(), (-1.0 + 2.0) / (0.25f64 + 1e-5).sqrt()];
    assert!(y.data().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn dropout_statistics() {
    let mut rng = Rng::seed(23);
    let x = Tensor::<f64>::full(&[100_000], 1.0);
    let (y, mask) = dropout(&x, 0.4, &mut rng, true).unwrap();
    assert!(mask.is_some());
    let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
    assert!((zeros - 0.4).abs() < 0.01, "{zeros}");
    assert!((y.mean() - 1.0).abs() < 0.02);
    assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.6).abs() < 1e-12));
    assert!(matches!(dropout(&x, 1.0, &mut rng, true), Err(Error::Param(_))));
    assert!(matches!(dropout(&x, 1.5, &mut rng, true), Err(Error::Param(_))));
}

#[test]
fn noise_statistics() {
    let mut rng = Rng::seed(24);
    let x = Tensor::<f64>::full(&[100_000], 3.0);
    let y = gaussian_noise(&x, 0.5, &mut rng, true).unwrap();
    let (m, v) = mean_var(y.data());
    assert!((m - 3.0).abs() < 0.01);
    assert!((v - 0.25).abs() < 0.01);
    assert_eq!(gaussian_noise(&x, 0.5, &mut rng, false).unwrap(), x);
}

#[test]
fn activation_values() {
    let x = Tensor::<f64>::from_vec(vec![4], vec![-2.0, -0.5, 0.0, 1.5]).unwrap();
    assert_eq!(activate(&x, Activation::Relu).data(), &[0.0, 0.0, 0.0, 1.5]);
    assert_eq!(activate(&x, Activation::LeakyRelu(0.2)).data(), &[-0.4, -0.1, 0.0, 1.5]);
    let s = activate(&x, Activation::Sigmoid);
    for (y, v) in s.data().iter().zip(x.data()) {
        assert!((y - 1.0 / (1.0 + (-v).exp())).abs() < 1e-15);
    }
    let t = activate(&x, Activation::Tanh);
    let ones = Tensor::full(&[4], 1.0);
    let g = activate_backward(&x, &t, &ones, Activation::Tanh).unwrap();
    for (gv, v) in g.data().iter().zip(x.data()) {
        let d = central_difference(|p| p[0].tanh(), &[*v], 0, 1e-6);
        assert!((gv - d).abs() < 1e-8);
    }
}

#[test]
fn msra_variance() {
    let mut rng = Rng::seed(29);
    let w: Tensor<f64> = msra_init(&[3, 3, 16, 32], fan_in(&[3, 3, 16, 32]), &mut rng);
    let (m, v) = mean_var(w.data());
    assert!(m.abs() < 0.01);
    assert!((v - 2.0 / 144.0).abs() < 0.1 * 2.0 / 144.0);

    let w: Tensor<f64> = msra_init(&[2, 50_000], fan_in(&[2, 50_000]), &mut rng);
    let (_, v) = mean_var(w.data());
    assert!((v - 1.0).abs() < 0.02, "{v}");
}

#[test]
fn bce_examples() {
    let p = Tensor::<f64>::from_vec(vec![3], vec![0.9, 0.2, 0.5]).unwrap();
    let t = [1.0, 0.0, 1.0];
    let (l, g) = bce_loss(&p, &t).unwrap();
    let want = -(0.9f64.ln() + 0.8f64.ln() + 0.5f64.ln()) / 3.0;
    assert!((l - want).abs() < 1e-12);
    let f = |v: &[f64]| bce_loss(&Tensor::from_vec(vec![3], v.to_vec()).unwrap(), &t).unwrap().0;
    assert!(grad_check(f, p.data(), g.data(), 1e-7, None).max_rel_error < 1e-6);
    assert!(bce_loss(&p, &[1.0]).is_err());
}

#[test]
fn adam_closed_form_first_step() {
    let cfg = AdamConfig { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
    let mut p = Tensor::<f64>::from_vec(vec![2], vec![1.0, -1.0]).unwrap();
    let mut s = AdamState::new(cfg, &[&p]);
    let g = Tensor::from_vec(vec![2], vec![0.3, -2.0]).unwrap();
    adam_step(&mut [&mut p], &[g.clone()], &mut s).unwrap();
    // m̂ = g and v̂ = g² after one step, so the move is lr·g/(|g|+ε)
    for (pv, (orig, gv)) in p.data().iter().zip([1.0, -1.0].iter().zip(g.data())) {
        let want = orig - 0.01 * gv / (gv.abs() + 1e-8);
        assert!((pv - want).abs() < 1e-12);
    }
}

#[test]
fn adam_minimizes_a_parabola() {
    let cfg = AdamConfig { learning_rate: 0.1, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
    let mut p = Tensor::<f64>::scalar(1.0);
    let mut s = AdamState::new(cfg, &[&p]);
    // scalar oracle run alongside
    let (mut q, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=100 {
        let g = Tensor::scalar(2.0 * p.data()[0]);
        adam_step(&mut [&mut p], &[g], &mut s).unwrap();
        let gq = 2.0 * q;
        m = 0.9 * m + 0.1 * gq;
        v = 0.999 * v + 0.001 * gq * gq;
        q -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
    }
    assert!((p.data()[0] - q).abs() < 1e-12);
    assert!(p.data()[0].abs() < 0.05, "{}", p.data()[0]);
}

#[test]
fn grad_check_on_linear_and_eps_sweep() {
    let a = [0.5, -1.5, 2.0];
    let f = |v: &[f64]| v.iter().zip(&a).map(|(x, c)| x * c).sum::<f64>();
    assert!(grad_check(f, &[0.3, 0.1, -0.7], &a, 1e-4, None).max_rel_error < 1e-8);

    let g = |v: &[f64]| v[0].sin() * v[1].exp();
    let x = [0.7f64, -0.2];
    let analytic = [x[0].cos() * x[1].exp(), x[0].sin() * x[1].exp()];
    for eps in [1e-3, 1e-4, 1e-5] {
        assert!(grad_check(g, &x, &analytic, eps, None).max_rel_error < 1e-4, "eps {eps}");
    }
}

#[test]
fn small_network_gradients() {
    let mut rng = Rng::seed(31);
    let mut net = Sequential::<f64>::new();
    net.push("conv", Layer::Conv { weight: random(&[3, 3, 2, 3], &mut rng), bias: random(&[3], &mut rng), geometry: ConvGeometry::new(3, 2, 1) });
    net.push("bn", Layer::BatchNorm(BatchNormParams::new(3, 0.9, 1e-5)));
    net.push("act", Layer::Activation(Activation::LeakyRelu(0.2)));
    net.push("flat", Layer::Reshape { shape: vec![12] });
    net.push("fc", Layer::Dense { weight: random(&[12, 1], &mut rng), bias: random(&[1], &mut rng) });
    net.push("out", Layer::Activation(Activation::Sigmoid));
    let x = random(&[3, 4, 4, 2], &mut rng);
    let report = grad_check_network(&net, &x, 1e-5, None, 2).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert!(report.checked > 100);
}

#[test]
fn forward_modes() {
    let mut rng = Rng::seed(33);
    let mut net = Sequential::<f32>::new();
    net.push("noise", Layer::GaussianNoise { std: 1.0 });
    net.push("bn", Layer::BatchNorm(BatchNormParams::new(2, 0.5, 1e-5)));
    let x = random(&[4, 2], &mut rng).cast::<f32>();
    let before = net.clone();
    net.forward_frozen(&x, Mode::DETERMINISTIC, &mut rng).unwrap();
    assert_eq!(net, before);
    let a = net.forward(&x, Mode::DETERMINISTIC, &mut Rng::seed(0)).unwrap().0;
    let b = net.forward(&x, Mode::DETERMINISTIC, &mut Rng::seed(1)).unwrap().0;
    assert_eq!(a, b);
    net.forward(&x, Mode::TRAIN, &mut rng).unwrap();
    assert_ne!(net, before);
    assert_eq!(net.infer(&x).unwrap(), net.infer(&x).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = Rng::seed(35);
    let mut net = Sequential::<f32>::new();
    net.push("fc", Layer::Dense { weight: random(&[3, 2], &mut rng).cast(), bias: random(&[2], &mut rng).cast() });
    net.push("bn", Layer::BatchNorm(BatchNormParams::new(2, 0.9, 1e-5)));
    let mut ckpt = Checkpoint::new();
    for (name, t) in net.named_tensors() {
        ckpt.insert(name, t);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.digest(), ckpt.digest());

    let mut other = net.clone();
    other.params_mut().iter_mut().for_each(|t| t.data_mut().fill(0.0));
    other.load_named(|n| back.get(n)).unwrap();
    assert_eq!(other, net);

    let mut bytes = ckpt.to_bytes();
    bytes[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
}

#[test]
fn rng_is_reproducible() {
    let draw = |seed| {
        let mut r = Rng::seed(seed);
        (0..16).map(|_| r.normal(1.0f64)).collect::<Vec<_>>()
    };
    assert_eq!(draw(7), draw(7));
    assert_ne!(draw(7), draw(8));
    let mut a = Rng::seed(3);
    let mut b = Rng::seed(3);
    assert_eq!(a.fork().uniform(), b.fork().uniform());
}
