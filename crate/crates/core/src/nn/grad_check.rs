//! Central finite-difference verification of analytic gradients (64-bit).

use super::layer::{Mode, Sequential};
use super::tensor::Tensor;
use super::Rng;
use crate::error::Result;

/// Worst relative error seen and where.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        GradCheckReport { max_rel_error: 0.0, worst: String::new(), checked: 0 }
    }

    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if self.checked == 1 || e > self.max_rel_error {
            self.max_rel_error = e;
            self.worst = what();
        }
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }
}

/// Gradients smaller than this in magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// `(f(x + ε) − f(x − ε)) / 2ε` along coordinate `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut probe = x.to_vec();
    probe[i] = x[i] + eps;
    let up = f(&probe);
    probe[i] = x[i] - eps;
    let down = f(&probe);
    (up - down) / (2.0 * eps)
}

/// Compare `analytic` (the gradient of `f` at `x`) with central differences
/// on `indices`, or every coordinate when `indices` is `None`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    indices: Option<&[usize]>,
) -> GradCheckReport {
    let mut report = GradCheckReport::new();
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    for &i in idx {
        let n = central_difference(&mut f, x, i, eps);
        report.record(|| format!("coordinate {i}"), analytic[i], n);
    }
    report
}

fn sample_indices(len: usize, per_tensor: Option<usize>, rng: &mut Rng) -> Vec<usize> {
    match per_tensor {
        Some(k) if k < len => (0..k).map(|_| rng.below(len)).collect(),
        _ => (0..len).collect(),
    }
}

/// Check every trainable tensor and the input gradient of `net` under the
/// scalar objective `⟨r, net(x)⟩` with a fixed random projection `r`.
/// `per_tensor` caps the number of probed coordinates per tensor.
pub fn grad_check_network(
    net: &Sequential<f64>,
    input: &Tensor<f64>,
    eps: f64,
    per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = Rng::seed(seed);
    let mut scratch = net.clone();
    let (out, tape) = scratch.forward(input, Mode::DETERMINISTIC, &mut rng)?;
    let projection = out.map(|_| rng.normal(1.0));
    let (gin, grads) = net.backward(tape, &projection)?;

    let objective = |n: &mut Sequential<f64>, x: &Tensor<f64>| -> f64 {
        let (y, _) = n.forward(x, Mode::DETERMINISTIC, &mut Rng::seed(0)).expect("shapes already validated");
        y.dot(&projection)
    };

    let mut report = GradCheckReport::new();
    let names = net.param_names();
    for (p, name) in names.iter().enumerate() {
        let original = net.params()[p].data().to_vec();
        let idx = sample_indices(original.len(), per_tensor, &mut rng);
        let f = |v: &[f64]| {
            let mut n = net.clone();
            n.params_mut()[p].data_mut().copy_from_slice(v);
            objective(&mut n, input)
        };
        let r = grad_check(f, &original, grads[p].data(), eps, Some(&idx));
        report = report.merge(GradCheckReport { worst: format!("{name}: {}", r.worst), ..r });
    }

    let idx = sample_indices(input.len(), per_tensor, &mut rng);
    let f = |v: &[f64]| {
        let x = Tensor::from_vec(input.shape().to_vec(), v.to_vec()).expect("same shape");
        objective(&mut net.clone(), &x)
    };
    let r = grad_check(f, input.data(), gin.data(), eps, Some(&idx));
    Ok(report.merge(GradCheckReport { worst: format!("input: {}", r.worst), ..r }))
}
