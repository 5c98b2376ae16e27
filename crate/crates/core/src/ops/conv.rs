//! Direct (nested-loop) 2D convolutions with zero padding.

use rayon::prelude::*;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Output spatial extent of a convolution, or `None` if the kernel does not fit.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel && stride >= 1).then(|| (padded - kernel) / stride + 1)
}

fn check_conv(
    input: Shape,
    weight: Shape,
    bias: Option<Shape>,
    stride: usize,
    padding: usize,
) -> Result<Shape> {
    let [n, c_in, h, w] = input;
    let [c_out, wc_in, kh, kw] = weight;
    if stride == 0 {
        return Err(Error::arg("conv2d", "stride must be >= 1"));
    }
    if wc_in != c_in {
        return Err(Error::dim(
            "conv2d",
            format!("weight expects {wc_in} input channels, input has {c_in}"),
        ));
    }
    if let Some(b) = bias {
        if b != [1, c_out, 1, 1] {
            return Err(Error::dim(
                "conv2d",
                format!("bias shape {b:?} must be [1, {c_out}, 1, 1]"),
            ));
        }
    }
    match (conv_out_dim(h, kh, stride, padding), conv_out_dim(w, kw, stride, padding)) {
        (Some(ho), Some(wo)) => Ok([n, c_out, ho, wo]),
        _ => Err(Error::dim(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})"),
        )),
    }
}

/// Cross-correlation `out[n,o,i,j] = b[o] + Σ_{c,kh,kw} x[n,c,i·s+kh−p, j·s+kw−p]·w[o,c,kh,kw]`.
///
/// `weight` is `[C_out, C_in, kh, kw]`; `bias`, when present, is `[1, C_out, 1, 1]`.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let out_shape = check_conv(
        input.shape(),
        weight.shape(),
        bias.map(|b| b.shape()),
        stride,
        padding,
    )?;
    let [_, c_in, h, w] = input.shape();
    let [_, c_out, ho, wo] = out_shape;
    let [_, _, kh, kw] = weight.shape();
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![T::zero(); out_shape.iter().product()];

    out.par_chunks_mut(ho * wo).enumerate().for_each(|(plane, dst)| {
        let (b, o) = (plane / c_out, plane % c_out);
        let b0 = bias.map_or(T::zero(), |t| t.data()[o]);
        dst.iter_mut().for_each(|v| *v = b0);
        for c in 0..c_in {
            let src = &x[(b * c_in + c) * h * w..][..h * w];
            let ker = &wt[(o * c_in + c) * kh * kw..][..kh * kw];
            for i in 0..ho {
                for ki in 0..kh {
                    let y = (i * stride + ki) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let row = &src[y as usize * w..][..w];
                    for j in 0..wo {
                        let mut acc = T::zero();
                        for kj in 0..kw {
                            let xx = (j * stride + kj) as isize - padding as isize;
                            if xx >= 0 && xx < w as isize {
                                acc = acc + row[xx as usize] * ker[ki * kw + kj];
                            }
                        }
                        dst[i * wo + j] = dst[i * wo + j] + acc;
                    }
                }
            }
        }
    });
    Tensor::from_op("conv2d", out_shape, out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct Conv2dGrads<T: Element> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Conv2dGrads<T>> {
    let out_shape = check_conv(input.shape(), weight.shape(), None, stride, padding)?;
    if grad_out.shape() != out_shape {
        return Err(Error::dim(
            "conv2d_backward",
            format!("grad shape {:?} != output shape {out_shape:?}", grad_out.shape()),
        ));
    }
    let [n, c_in, h, w] = input.shape();
    let [c_out, _, kh, kw] = weight.shape();
    let [_, _, ho, wo] = out_shape;
    let (x, wt, g) = (input.data(), weight.data(), grad_out.data());

    let mut dx = vec![T::zero(); input.numel()];
    dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dst)| {
        let (b, c) = (plane / c_in, plane % c_in);
        for o in 0..c_out {
            let gp = &g[(b * c_out + o) * ho * wo..][..ho * wo];
            let ker = &wt[(o * c_in + c) * kh * kw..][..kh * kw];
            for i in 0..ho {
                for ki in 0..kh {
                    let y = (i * stride + ki) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for j in 0..wo {
                        let gv = gp[i * wo + j];
                        for kj in 0..kw {
                            let xx = (j * stride + kj) as isize - padding as isize;
                            if xx >= 0 && xx < w as isize {
                                let d = &mut dst[y as usize * w + xx as usize];
                                *d = *d + gv * ker[ki * kw + kj];
                            }
                        }
                    }
                }
            }
        }
    });

    let mut dw = vec![T::zero(); weight.numel()];
    dw.par_chunks_mut(c_in * kh * kw).enumerate().for_each(|(o, dst)| {
        for b in 0..n {
            let gp = &g[(b * c_out + o) * ho * wo..][..ho * wo];
            for c in 0..c_in {
                let src = &x[(b * c_in + c) * h * w..][..h * w];
                for ki in 0..kh {
                    for kj in 0..kw {
                        let mut acc = T::zero();
                        for i in 0..ho {
                            let y = (i * stride + ki) as isize - padding as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for j in 0..wo {
                                let xx = (j * stride + kj) as isize - padding as isize;
                                if xx >= 0 && xx < w as isize {
                                    acc = acc + gp[i * wo + j] * src[y as usize * w + xx as usize];
                                }
                            }
                        }
                        let d = &mut dst[(c * kh + ki) * kw + kj];
                        *d = *d + acc;
                    }
                }
            }
        }
    });

    let mut db = vec![T::zero(); c_out];
    for b in 0..n {
        for (o, d) in db.iter_mut().enumerate() {
            let gp = &g[(b * c_out + o) * ho * wo..][..ho * wo];
            *d = *d + gp.iter().copied().sum::<T>();
        }
    }

    Ok(Conv2dGrads {
        input: Tensor::from_op("conv2d_backward", input.shape(), dx)?,
        weight: Tensor::from_op("conv2d_backward", weight.shape(), dw)?,
        bias: Tensor::from_op("conv2d_backward", [1, c_out, 1, 1], db)?,
    })
}

fn check_depthwise(input: Shape, weight: Shape) -> Result<usize> {
    let [c_w, one, kh, kw] = weight;
    if one != 1 || kh != kw || kh % 2 == 0 {
        return Err(Error::dim(
            "depthwise_conv2d",
            format!("weight must be [C, 1, k, k] with odd k, got {weight:?}"),
        ));
    }
    if c_w != input[1] {
        return Err(Error::dim(
            "depthwise_conv2d",
            format!("{c_w} filters for {} input channels", input[1]),
        ));
    }
    Ok(kh)
}

/// Shape-preserving per-channel convolution, stride 1, zero padding `k/2`.
/// `weight` is `[C, 1, k, k]` with odd `k`.
pub fn depthwise_conv2d<T: Element>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<Tensor<T>> {
    let k = check_depthwise(input.shape(), weight.shape())?;
    let [_, c_in, h, w] = input.shape();
    let pad = (k / 2) as isize;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![T::zero(); input.numel()];
    out.par_chunks_mut(h * w).enumerate().for_each(|(plane, dst)| {
        let c = plane % c_in;
        let src = &x[plane * h * w..][..h * w];
        let ker = &wt[c * k * k..][..k * k];
        for i in 0..h {
            for j in 0..w {
                let mut acc = T::zero();
                for ki in 0..k {
                    let y = i as isize + ki as isize - pad;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kj in 0..k {
                        let xx = j as isize + kj as isize - pad;
                        if xx >= 0 && xx < w as isize {
                            acc = acc + src[y as usize * w + xx as usize] * ker[ki * k + kj];
                        }
                    }
                }
                dst[i * w + j] = acc;
            }
        }
    });
    Tensor::from_op("depthwise_conv2d", input.shape(), out)
}

/// Returns `(d_input, d_weight)` for [`depthwise_conv2d`].
pub fn depthwise_conv2d_backward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let k = check_depthwise(input.shape(), weight.shape())?;
    if grad_out.shape() != input.shape() {
        return Err(Error::dim(
            "depthwise_conv2d_backward",
            format!("grad shape {:?} != {:?}", grad_out.shape(), input.shape()),
        ));
    }
    let [n, c_in, h, w] = input.shape();
    let pad = (k / 2) as isize;
    let (x, wt, g) = (input.data(), weight.data(), grad_out.data());

    let mut dx = vec![T::zero(); input.numel()];
    dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, dst)| {
        let c = plane % c_in;
        let gp = &g[plane * h * w..][..h * w];
        let ker = &wt[c * k * k..][..k * k];
        for i in 0..h {
            for j in 0..w {
                let gv = gp[i * w + j];
                for ki in 0..k {
                    let y = i as isize + ki as isize - pad;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kj in 0..k {
                        let xx = j as isize + kj as isize - pad;
                        if xx >= 0 && xx < w as isize {
                            let d = &mut dst[y as usize * w + xx as usize];
                            *d = *d + gv * ker[ki * k + kj];
                        }
                    }
                }
            }
        }
    });

    let mut dw = vec![T::zero(); weight.numel()];
    dw.par_chunks_mut(k * k).enumerate().for_each(|(c, dst)| {
        for b in 0..n {
            let plane = b * c_in + c;
            let src = &x[plane * h * w..][..h * w];
            let gp = &g[plane * h * w..][..h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let mut acc = T::zero();
                    for i in 0..h {
                        let y = i as isize + ki as isize - pad;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for j in 0..w {
                            let xx = j as isize + kj as isize - pad;
                            if xx >= 0 && xx < w as isize {
                                acc = acc + gp[i * w + j] * src[y as usize * w + xx as usize];
                            }
                        }
                    }
                    dst[ki * k + kj] = dst[ki * k + kj] + acc;
                }
            }
        }
    });

    Ok((
        Tensor::from_op("depthwise_conv2d_backward", input.shape(), dx)?,
        Tensor::from_op("depthwise_conv2d_backward", weight.shape(), dw)?,
    ))
}
