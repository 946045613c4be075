//! 2-D convolution and its adjoint on NHWC tensors.
//!
//! Convolution weights are `[k, k, c_in, c_out]`. A transposed convolution
//! reuses the layout of the convolution it is the adjoint of, so its weights
//! are `[k, k, c_out, c_in]` from the transposed layer's point of view.

use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::parallel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry { kernel, stride, padding }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Param(format!("kernel and stride must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `floor((in + 2·pad − k) / stride) + 1`
    pub fn conv_out(&self, extent: usize) -> Result<usize> {
        let padded = extent + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::Dimension(format!("extent {extent} too small for kernel {}", self.kernel)));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// `(in − 1)·stride − 2·pad + k`
    pub fn transpose_out(&self, extent: usize) -> Result<usize> {
        let full = (extent - 1) * self.stride + self.kernel;
        if full <= 2 * self.padding {
            return Err(Error::Dimension(format!("transposed output of extent {extent} would be empty")));
        }
        Ok(full - 2 * self.padding)
    }
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
}

impl Dims {
    fn of<F: Scalar>(t: &Tensor<F>, what: &str) -> Result<Self> {
        t.expect_rank(4, what)?;
        let s = t.shape();
        Ok(Dims { n: s[0], h: s[1], w: s[2], c: s[3] })
    }

    fn pixel(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// Input coordinate hit by output coordinate `o` through kernel tap `k`.
#[inline]
fn source(o: usize, k: usize, g: &ConvGeometry, extent: usize) -> Option<usize> {
    let i = (o * g.stride + k) as isize - g.padding as isize;
    (i >= 0 && (i as usize) < extent).then_some(i as usize)
}

/// `[k, k, a, b]` → `[k, k, b, a]`
fn swap_inner<F: Scalar>(w: &[F], k: usize, a: usize, b: usize) -> Vec<F> {
    let mut out = vec![F::zero(); w.len()];
    for tap in 0..k * k {
        let (src, dst) = (&w[tap * a * b..][..a * b], &mut out[tap * a * b..][..a * b]);
        for i in 0..a {
            for j in 0..b {
                dst[j * a + i] = src[i * b + j];
            }
        }
    }
    out
}

/// Correlate `x` (`xd`) with `w` `[k,k,xd.c,co]` into an output of spatial size `oh × ow`.
fn correlate<F: Scalar>(x: &[F], xd: Dims, w: &[F], co: usize, g: &ConvGeometry, oh: usize, ow: usize) -> Vec<F> {
    let (k, ci) = (g.kernel, xd.c);
    let mut y = vec![F::zero(); xd.n * oh * ow * co];
    let transposed = (co < ci).then(|| swap_inner(w, k, ci, co));
    parallel::for_each_chunk_mut(&mut y, oh * ow * co, |b, ys| {
        let xs = &x[b * xd.pixel()..][..xd.pixel()];
        for oy in 0..oh {
            for ox in 0..ow {
                let out = &mut ys[(oy * ow + ox) * co..][..co];
                for ky in 0..k {
                    let Some(iy) = source(oy, ky, g, xd.h) else { continue };
                    for kx in 0..k {
                        let Some(ix) = source(ox, kx, g, xd.w) else { continue };
                        let xrow = &xs[(iy * xd.w + ix) * ci..][..ci];
                        let tap = ky * k + kx;
                        match &transposed {
                            None => {
                                for (c, &a) in xrow.iter().enumerate() {
                                    axpy(a, &w[(tap * ci + c) * co..][..co], out);
                                }
                            }
                            Some(wt) => {
                                for (o, acc) in out.iter_mut().enumerate() {
                                    *acc += dot(xrow, &wt[(tap * co + o) * ci..][..ci]);
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    y
}

/// Adjoint of [`correlate`] with respect to its input: scatter `gy` back through `w`.
fn scatter<F: Scalar>(gy: &[F], gd: Dims, w: &[F], ci: usize, g: &ConvGeometry, h: usize, wd: usize) -> Vec<F> {
    let (k, co) = (g.kernel, gd.c);
    let mut gx = vec![F::zero(); gd.n * h * wd * ci];
    let transposed = (ci >= co).then(|| swap_inner(w, k, ci, co));
    parallel::for_each_chunk_mut(&mut gx, h * wd * ci, |b, gxs| {
        let gys = &gy[b * gd.pixel()..][..gd.pixel()];
        for oy in 0..gd.h {
            for ox in 0..gd.w {
                let grow = &gys[(oy * gd.w + ox) * co..][..co];
                for ky in 0..k {
                    let Some(iy) = source(oy, ky, g, h) else { continue };
                    for kx in 0..k {
                        let Some(ix) = source(ox, kx, g, wd) else { continue };
                        let tap = ky * k + kx;
                        let dst = &mut gxs[(iy * wd + ix) * ci..][..ci];
                        match &transposed {
                            Some(wt) => {
                                for (o, &a) in grow.iter().enumerate() {
                                    axpy(a, &wt[(tap * co + o) * ci..][..ci], dst);
                                }
                            }
                            None => {
                                for (c, d) in dst.iter_mut().enumerate() {
                                    *d += dot(&w[(tap * ci + c) * co..][..co], grow);
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

/// Gradient of [`correlate`] with respect to `w`, laid out `[k,k,xd.c,gd.c]`.
fn filter_grad<F: Scalar>(x: &[F], xd: Dims, gy: &[F], gd: Dims, g: &ConvGeometry) -> Vec<F> {
    let (k, ci, co) = (g.kernel, xd.c, gd.c);
    let wlen = k * k * ci * co;
    let swap = co < ci;
    let partials = parallel::map_indexed(xd.n, |b| {
        let xs = &x[b * xd.pixel()..][..xd.pixel()];
        let gys = &gy[b * gd.pixel()..][..gd.pixel()];
        let mut gw = vec![F::zero(); wlen];
        for oy in 0..gd.h {
            for ox in 0..gd.w {
                let grow = &gys[(oy * gd.w + ox) * co..][..co];
                for ky in 0..k {
                    let Some(iy) = source(oy, ky, g, xd.h) else { continue };
                    for kx in 0..k {
                        let Some(ix) = source(ox, kx, g, xd.w) else { continue };
                        let xrow = &xs[(iy * xd.w + ix) * ci..][..ci];
                        let tap = ky * k + kx;
                        if swap {
                            for (o, &a) in grow.iter().enumerate() {
                                axpy(a, xrow, &mut gw[(tap * co + o) * ci..][..ci]);
                            }
                        } else {
                            for (c, &a) in xrow.iter().enumerate() {
                                axpy(a, grow, &mut gw[(tap * ci + c) * co..][..co]);
                            }
                        }
                    }
                }
            }
        }
        gw
    });
    let mut total = vec![F::zero(); wlen];
    for p in &partials {
        axpy(F::one(), p, &mut total);
    }
    if swap {
        swap_inner(&total, k, co, ci)
    } else {
        total
    }
}

fn check_weight<F: Scalar>(weight: &Tensor<F>, k: usize, c: usize, what: &str) -> Result<(usize, usize)> {
    weight.expect_rank(4, what)?;
    let s = weight.shape();
    if s[0] != k || s[1] != k {
        return Err(Error::Dimension(format!("{what}: kernel {}x{} does not match geometry {k}", s[0], s[1])));
    }
    if s[2] != c {
        return Err(Error::Dimension(format!("{what}: weight expects {} input channels, got {c}", s[2])));
    }
    Ok((s[2], s[3]))
}

fn add_bias<F: Scalar>(y: &mut [F], bias: Option<&Tensor<F>>, c: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != c {
            return Err(Error::Dimension(format!("bias has {} entries for {c} channels", b.len())));
        }
        for row in y.chunks_mut(c) {
            axpy(F::one(), b.data(), row);
        }
    }
    Ok(())
}

fn channel_sums<F: Scalar>(g: &[F], c: usize) -> Tensor<F> {
    let mut out = vec![F::zero(); c];
    for row in g.chunks(c) {
        axpy(F::one(), row, &mut out);
    }
    Tensor::from_vec(vec![c], out).expect("positive channel count")
}

/// Strided, zero-padded 2-D cross-correlation. `input` is `[n,h,w,c_in]`,
/// `weight` is `[k,k,c_in,c_out]`.
pub fn conv2d<F: Scalar>(input: &Tensor<F>, weight: &Tensor<F>, bias: Option<&Tensor<F>>, g: ConvGeometry) -> Result<Tensor<F>> {
    g.validate()?;
    let xd = Dims::of(input, "conv2d input")?;
    let (_, co) = check_weight(weight, g.kernel, xd.c, "conv2d")?;
    let (oh, ow) = (g.conv_out(xd.h)?, g.conv_out(xd.w)?);
    let mut y = correlate(input.data(), xd, weight.data(), co, &g, oh, ow);
    add_bias(&mut y, bias, co)?;
    Tensor::from_vec(vec![xd.n, oh, ow, co], y)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
    g: ConvGeometry,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let xd = Dims::of(input, "conv2d input")?;
    let gd = Dims::of(grad_out, "conv2d upstream gradient")?;
    let (ci, co) = check_weight(weight, g.kernel, xd.c, "conv2d")?;
    if gd.n != xd.n || gd.c != co || gd.h != g.conv_out(xd.h)? || gd.w != g.conv_out(xd.w)? {
        return Err(Error::Dimension(format!("conv2d upstream gradient shape {:?} does not match output", grad_out.shape())));
    }
    let gx = scatter(grad_out.data(), gd, weight.data(), ci, &g, xd.h, xd.w);
    let gw = filter_grad(input.data(), xd, grad_out.data(), gd, &g);
    Ok((
        Tensor::from_vec(input.shape().to_vec(), gx)?,
        Tensor::from_vec(weight.shape().to_vec(), gw)?,
        channel_sums(grad_out.data(), co),
    ))
}

/// Adjoint of [`conv2d`] for the same geometry. `input` is `[n,h,w,c_in]`,
/// `weight` is `[k,k,c_out,c_in]`; output extent is `(in − 1)·stride − 2·pad + k`.
pub fn conv2d_transpose<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    g: ConvGeometry,
) -> Result<Tensor<F>> {
    g.validate()?;
    let yd = Dims::of(input, "conv2d_transpose input")?;
    weight.expect_rank(4, "conv2d_transpose weight")?;
    let s = weight.shape();
    if s[0] != g.kernel || s[1] != g.kernel || s[3] != yd.c {
        return Err(Error::Dimension(format!(
            "conv2d_transpose weight {:?} incompatible with {} input channels and kernel {}",
            s, yd.c, g.kernel
        )));
    }
    let co = s[2];
    let (oh, ow) = (g.transpose_out(yd.h)?, g.transpose_out(yd.w)?);
    let mut x = scatter(input.data(), yd, weight.data(), co, &g, oh, ow);
    add_bias(&mut x, bias, co)?;
    Tensor::from_vec(vec![yd.n, oh, ow, co], x)
}

/// Gradients of [`conv2d_transpose`] with respect to input, weight and bias.
pub fn conv2d_transpose_backward<F: Scalar>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    grad_out: &Tensor<F>,
    g: ConvGeometry,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let yd = Dims::of(input, "conv2d_transpose input")?;
    let gd = Dims::of(grad_out, "conv2d_transpose upstream gradient")?;
    weight.expect_rank(4, "conv2d_transpose weight")?;
    let co = weight.dim(2);
    if gd.n != yd.n || gd.c != co || gd.h != g.transpose_out(yd.h)? || gd.w != g.transpose_out(yd.w)? || weight.dim(3) != yd.c {
        return Err(Error::Dimension(format!(
            "conv2d_transpose upstream gradient shape {:?} does not match output",
            grad_out.shape()
        )));
    }
    let gi = correlate(grad_out.data(), gd, weight.data(), yd.c, &g, yd.h, yd.w);
    let gw = filter_grad(grad_out.data(), gd, input.data(), yd, &g);
    Ok((
        Tensor::from_vec(input.shape().to_vec(), gi)?,
        Tensor::from_vec(weight.shape().to_vec(), gw)?,
        channel_sums(grad_out.data(), co),
    ))
}
