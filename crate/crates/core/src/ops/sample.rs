//! Bilinear point sampling with clamp-to-border addressing.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{SamplingGrid, Tensor};

/// Interpolation stencil for one coordinate pair inside an `h×w` plane.
#[derive(Clone, Copy)]
struct Stencil<T> {
    i00: usize,
    i01: usize,
    i10: usize,
    i11: usize,
    fr: T,
    fc: T,
    /// Row/col derivatives pass through only when the raw coordinate was
    /// not clamped.
    row_live: bool,
    col_live: bool,
}

#[inline]
fn axis<T: Element>(v: T, len: usize) -> (usize, usize, T, bool) {
    let hi = T::from_f64((len - 1) as f64);
    let live = v >= T::zero() && v <= hi;
    let vc = v.max(T::zero()).min(hi);
    let v0 = vc.floor();
    let i0 = v0.as_f64() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, vc - v0, live)
}

#[inline]
fn stencil<T: Element>(r: T, c: T, h: usize, w: usize) -> Stencil<T> {
    let (r0, r1, fr, row_live) = axis(r, h);
    let (c0, c1, fc, col_live) = axis(c, w);
    Stencil {
        i00: r0 * w + c0,
        i01: r0 * w + c1,
        i10: r1 * w + c0,
        i11: r1 * w + c1,
        fr,
        fc,
        row_live,
        col_live,
    }
}

/// `a + t·(b − a)` for `t ∈ [0, 1]`, exact at both ends, exact when
/// `a == b`, and never outside `[min(a, b), max(a, b)]`.
#[inline]
fn lerp<T: Element>(a: T, b: T, t: T) -> T {
    let zero = T::zero();
    if (a <= zero && b >= zero) || (a >= zero && b <= zero) {
        return t * b + (T::one() - t) * a;
    }
    if t == T::one() {
        return b;
    }
    let x = a + t * (b - a);
    if b > a {
        x.min(b)
    } else {
        x.max(b)
    }
}

#[inline]
fn interp<T: Element>(plane: &[T], s: &Stencil<T>) -> T {
    let top = lerp(plane[s.i00], plane[s.i01], s.fc);
    let bot = lerp(plane[s.i10], plane[s.i11], s.fc);
    lerp(top, bot, s.fr)
}

#[inline]
fn scatter<T: Element>(plane: &mut [T], s: &Stencil<T>, g: T) {
    let one = T::one();
    plane[s.i00] = plane[s.i00] + g * (one - s.fr) * (one - s.fc);
    plane[s.i01] = plane[s.i01] + g * (one - s.fr) * s.fc;
    plane[s.i10] = plane[s.i10] + g * s.fr * (one - s.fc);
    plane[s.i11] = plane[s.i11] + g * s.fr * s.fc;
}

/// `(∂/∂row, ∂/∂col)` of the interpolant; zero along a clamped axis.
#[inline]
fn coord_grad<T: Element>(plane: &[T], s: &Stencil<T>) -> (T, T) {
    let one = T::one();
    let (v00, v01, v10, v11) = (plane[s.i00], plane[s.i01], plane[s.i10], plane[s.i11]);
    let dr = if s.row_live {
        (one - s.fc) * (v10 - v00) + s.fc * (v11 - v01)
    } else {
        T::zero()
    };
    let dc = if s.col_live {
        (one - s.fr) * (v01 - v00) + s.fr * (v11 - v10)
    } else {
        T::zero()
    };
    (dr, dc)
}

fn check_grouped<T: Element>(input: &Tensor<T>, grid: &SamplingGrid<T>) -> Result<usize> {
    let [n, c, _, _] = input.shape();
    if grid.batch() != n {
        return Err(Error::dim(
            "bilinear_sample",
            format!("grid batch {} != input batch {n}", grid.batch()),
        ));
    }
    let g = grid.groups();
    if c % g != 0 {
        return Err(Error::dim(
            "bilinear_sample",
            format!("{c} channels cannot be split into {g} grid groups"),
        ));
    }
    Ok(c / g)
}

/// Samples every channel at the coordinates of its group's grid.
///
/// Channels are split into `grid.groups()` contiguous groups; channel `c`
/// reads grid group `c / (C / groups)`. Output is `(N, C, H_out, W_out)`.
/// Coordinates are clamped to `[0, H−1]×[0, W−1]` before interpolation.
pub fn bilinear_sample<T: Element>(input: &Tensor<T>, grid: &SamplingGrid<T>) -> Result<Tensor<T>> {
    let per_group = check_grouped(input, grid)?;
    let [n, c, h, w] = input.shape();
    let (ho, wo) = grid.out_hw();
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for b in 0..n {
        for ch in 0..c {
            let g = ch / per_group;
            let plane = &x[(b * c + ch) * h * w..][..h * w];
            for i in 0..ho {
                for j in 0..wo {
                    let (r, col) = grid.at(b, g, i, j);
                    out.push(interp(plane, &stencil(r, col, h, w)));
                }
            }
        }
    }
    Tensor::from_op("bilinear_sample", [n, c, ho, wo], out)
}

/// Returns `(d_input, d_grid)` for [`bilinear_sample`].
pub fn bilinear_sample_backward<T: Element>(
    input: &Tensor<T>,
    grid: &SamplingGrid<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, SamplingGrid<T>)> {
    let per_group = check_grouped(input, grid)?;
    let [n, c, h, w] = input.shape();
    let (ho, wo) = grid.out_hw();
    if grad_out.shape() != [n, c, ho, wo] {
        return Err(Error::dim(
            "bilinear_sample_backward",
            format!("grad shape {:?} != [{n}, {c}, {ho}, {wo}]", grad_out.shape()),
        ));
    }
    let x = input.data();
    let go = grad_out.data();
    let mut dx = vec![T::zero(); input.numel()];
    let mut dg = vec![T::zero(); grid.coords().len()];
    for b in 0..n {
        for ch in 0..c {
            let g = ch / per_group;
            let base = (b * c + ch) * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let (r, col) = grid.at(b, g, i, j);
                    let s = stencil(r, col, h, w);
                    let gv = go[((b * c + ch) * ho + i) * wo + j];
                    scatter(&mut dx[base..base + h * w], &s, gv);
                    let (dr, dc) = coord_grad(&x[base..base + h * w], &s);
                    let o = grid.offset(b, g, i, j);
                    dg[o] = dg[o] + gv * dr;
                    dg[o + 1] = dg[o + 1] + gv * dc;
                }
            }
        }
    }
    Ok((
        Tensor::from_op("bilinear_sample_backward", input.shape(), dx)?,
        SamplingGrid::new(grid.shape(), dg)?,
    ))
}

fn check_points<T: Element>(input: &Tensor<T>, grid: &SamplingGrid<T>) -> Result<()> {
    if grid.batch() != input.shape()[0] {
        return Err(Error::dim(
            "sample_points",
            format!("grid batch {} != input batch {}", grid.batch(), input.shape()[0]),
        ));
    }
    Ok(())
}

/// Samples every channel at each of the grid's `P` point sets.
///
/// With a grid of shape `(N, P, H_out, W_out, 2)` the output is
/// `(N, C·P, H_out, W_out)` and channel `c·P + p` holds channel `c` read at
/// point set `p`. This is the gather step of a deformable convolution.
pub fn sample_points<T: Element>(input: &Tensor<T>, grid: &SamplingGrid<T>) -> Result<Tensor<T>> {
    check_points(input, grid)?;
    let [n, c, h, w] = input.shape();
    let p = grid.groups();
    let (ho, wo) = grid.out_hw();
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * p * ho * wo);
    for b in 0..n {
        for ch in 0..c {
            let plane = &x[(b * c + ch) * h * w..][..h * w];
            for pt in 0..p {
                for i in 0..ho {
                    for j in 0..wo {
                        let (r, col) = grid.at(b, pt, i, j);
                        out.push(interp(plane, &stencil(r, col, h, w)));
                    }
                }
            }
        }
    }
    Tensor::from_op("sample_points", [n, c * p, ho, wo], out)
}

/// Returns `(d_input, d_grid)` for [`sample_points`].
pub fn sample_points_backward<T: Element>(
    input: &Tensor<T>,
    grid: &SamplingGrid<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, SamplingGrid<T>)> {
    check_points(input, grid)?;
    let [n, c, h, w] = input.shape();
    let p = grid.groups();
    let (ho, wo) = grid.out_hw();
    if grad_out.shape() != [n, c * p, ho, wo] {
        return Err(Error::dim(
            "sample_points_backward",
            format!("grad shape {:?} != [{n}, {}, {ho}, {wo}]", grad_out.shape(), c * p),
        ));
    }
    let x = input.data();
    let go = grad_out.data();
    let mut dx = vec![T::zero(); input.numel()];
    let mut dg = vec![T::zero(); grid.coords().len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for pt in 0..p {
                for i in 0..ho {
                    for j in 0..wo {
                        let (r, col) = grid.at(b, pt, i, j);
                        let s = stencil(r, col, h, w);
                        let gv = go[((b * c * p + ch * p + pt) * ho + i) * wo + j];
                        scatter(&mut dx[base..base + h * w], &s, gv);
                        let (dr, dc) = coord_grad(&x[base..base + h * w], &s);
                        let o = grid.offset(b, pt, i, j);
                        dg[o] = dg[o] + gv * dr;
                        dg[o + 1] = dg[o + 1] + gv * dc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_op("sample_points_backward", input.shape(), dx)?,
        SamplingGrid::new(grid.shape(), dg)?,
    ))
}
