//! Broadcasting elementwise arithmetic and axis reductions.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{numel, Shape, Tensor};

pub fn broadcast_shape(op: &'static str, a: Shape, b: Shape) -> Result<Shape> {
    let mut out = [0; 4];
    for d in 0..4 {
        out[d] = match (a[d], b[d]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::dim(
                    op,
                    format!("shapes {a:?} and {b:?} do not broadcast"),
                ))
            }
        };
    }
    Ok(out)
}

fn strides_for(shape: Shape, out: Shape) -> [usize; 4] {
    let full = [shape[1] * shape[2] * shape[3], shape[2] * shape[3], shape[3], 1];
    let mut s = [0; 4];
    for d in 0..4 {
        s[d] = if shape[d] == 1 && out[d] != 1 { 0 } else { full[d] };
    }
    s
}

/// Calls `f(out_flat, a_flat, b_flat)` over the broadcast output.
fn for_each_broadcast(a: Shape, b: Shape, out: Shape, mut f: impl FnMut(usize, usize, usize)) {
    let sa = strides_for(a, out);
    let sb = strides_for(b, out);
    let mut k = 0;
    for n in 0..out[0] {
        for c in 0..out[1] {
            for h in 0..out[2] {
                for w in 0..out[3] {
                    let ia = n * sa[0] + c * sa[1] + h * sa[2] + w * sa[3];
                    let ib = n * sb[0] + c * sb[1] + h * sb[2] + w * sb[3];
                    f(k, ia, ib);
                    k += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "broadcast_add",
            BinaryOp::Mul => "broadcast_mul",
        }
    }
}

pub fn broadcast<T: Element>(op: BinaryOp, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let out = broadcast_shape(op.name(), a.shape(), b.shape())?;
    let (da, db) = (a.data(), b.data());
    let mut data = vec![T::zero(); numel(&out)];
    for_each_broadcast(a.shape(), b.shape(), out, |k, ia, ib| {
        data[k] = match op {
            BinaryOp::Add => da[ia] + db[ib],
            BinaryOp::Mul => da[ia] * db[ib],
        };
    });
    Tensor::from_op(op.name(), out, data)
}

/// Gradients of [`broadcast`] w.r.t. both operands, reduced back to their shapes.
pub fn broadcast_backward<T: Element>(
    op: BinaryOp,
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let out = broadcast_shape(op.name(), a.shape(), b.shape())?;
    if grad_out.shape() != out {
        return Err(Error::dim(
            op.name(),
            format!("grad shape {:?} != output shape {out:?}", grad_out.shape()),
        ));
    }
    let (da, db, g) = (a.data(), b.data(), grad_out.data());
    let mut ga = vec![T::zero(); a.numel()];
    let mut gb = vec![T::zero(); b.numel()];
    for_each_broadcast(a.shape(), b.shape(), out, |k, ia, ib| match op {
        BinaryOp::Add => {
            ga[ia] = ga[ia] + g[k];
            gb[ib] = gb[ib] + g[k];
        }
        BinaryOp::Mul => {
            ga[ia] = ga[ia] + g[k] * db[ib];
            gb[ib] = gb[ib] + g[k] * da[ia];
        }
    });
    Ok((
        Tensor::from_op(op.name(), a.shape(), ga)?,
        Tensor::from_op(op.name(), b.shape(), gb)?,
    ))
}

/// Which of the four axes a reduction collapses (kept as size 1).
pub type Axes = [bool; 4];

pub const SPATIAL: Axes = [false, false, true, true];
pub const CHANNEL: Axes = [false, true, false, false];
pub const ALL: Axes = [true, true, true, true];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
}

fn reduced_shape(shape: Shape, axes: Axes) -> Shape {
    let mut out = shape;
    for d in 0..4 {
        if axes[d] {
            out[d] = 1;
        }
    }
    out
}

/// Reduces over `axes`, keeping them as size-1 dims. For `Max`, also
/// returns the flat input index of the first maximum per output element.
fn reduce_impl<T: Element>(x: &Tensor<T>, axes: Axes, kind: Reduction) -> (Vec<T>, Vec<usize>, Shape) {
    let shape = x.shape();
    let out = reduced_shape(shape, axes);
    let s_out = strides_for(out, shape);
    let mut acc = vec![
        match kind {
            Reduction::Max => T::neg_infinity(),
            _ => T::zero(),
        };
        numel(&out)
    ];
    let mut arg = vec![usize::MAX; if kind == Reduction::Max { numel(&out) } else { 0 }];
    let d = x.data();
    let mut k = 0;
    for n in 0..shape[0] {
        for c in 0..shape[1] {
            for h in 0..shape[2] {
                for w in 0..shape[3] {
                    let o = n * s_out[0] + c * s_out[1] + h * s_out[2] + w * s_out[3];
                    match kind {
                        Reduction::Max => {
                            if d[k] > acc[o] {
                                acc[o] = d[k];
                                arg[o] = k;
                            }
                        }
                        _ => acc[o] = acc[o] + d[k],
                    }
                    k += 1;
                }
            }
        }
    }
    if kind == Reduction::Mean {
        let count = T::from_f64((numel(&shape) / numel(&out)) as f64);
        acc.iter_mut().for_each(|v| *v = *v / count);
    }
    (acc, arg, out)
}

pub fn reduce<T: Element>(x: &Tensor<T>, axes: Axes, kind: Reduction) -> Result<Tensor<T>> {
    let (data, _, out) = reduce_impl(x, axes, kind);
    Tensor::from_op("reduce", out, data)
}

pub fn reduce_backward<T: Element>(
    x: &Tensor<T>,
    axes: Axes,
    kind: Reduction,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    let out = reduced_shape(shape, axes);
    if grad_out.shape() != out {
        return Err(Error::dim(
            "reduce_backward",
            format!("grad shape {:?} != reduced shape {out:?}", grad_out.shape()),
        ));
    }
    let g = grad_out.data();
    let mut dx = vec![T::zero(); x.numel()];
    match kind {
        Reduction::Max => {
            let (_, arg, _) = reduce_impl(x, axes, kind);
            for (o, &i) in arg.iter().enumerate() {
                dx[i] = dx[i] + g[o];
            }
        }
        Reduction::Sum | Reduction::Mean => {
            let scale = if kind == Reduction::Mean {
                T::one() / T::from_f64((numel(&shape) / numel(&out)) as f64)
            } else {
                T::one()
            };
            let s_out = strides_for(out, shape);
            let mut k = 0;
            for n in 0..shape[0] {
                for c in 0..shape[1] {
                    for h in 0..shape[2] {
                        for w in 0..shape[3] {
                            let o = n * s_out[0] + c * s_out[1] + h * s_out[2] + w * s_out[3];
                            dx[k] = g[o] * scale;
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_op("reduce_backward", shape, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_add_and_mul() {
        let a = Tensor::<f64>::from_fn([1, 2, 1, 1], |_, c, _, _| c as f64 + 1.0).unwrap();
        let b = Tensor::<f64>::from_fn([1, 1, 2, 3], |_, _, h, w| (h * 3 + w) as f64).unwrap();
        let s = broadcast(BinaryOp::Add, &a, &b).unwrap();
        assert_eq!(s.shape(), [1, 2, 2, 3]);
        assert_eq!(s.at(0, 1, 1, 2), 2.0 + 5.0);
        let p = broadcast(BinaryOp::Mul, &a, &b).unwrap();
        assert_eq!(p.at(0, 1, 1, 2), 10.0);
        let (ga, gb) =
            broadcast_backward(BinaryOp::Mul, &a, &b, &Tensor::ones([1, 2, 2, 3]).unwrap()).unwrap();
        assert_eq!(ga.data(), &[15.0, 15.0]);
        assert_eq!(gb.data(), &[3.0; 6]);
        let c = Tensor::<f64>::ones([1, 3, 1, 1]).unwrap();
        assert!(broadcast(BinaryOp::Add, &a, &c).is_err());
    }

    #[test]
    fn reductions() {
        let x = Tensor::<f64>::from_fn([1, 2, 2, 2], |_, c, h, w| (c * 4 + h * 2 + w) as f64).unwrap();
        assert_eq!(reduce(&x, SPATIAL, Reduction::Mean).unwrap().data(), &[1.5, 5.5]);
        assert_eq!(reduce(&x, SPATIAL, Reduction::Max).unwrap().data(), &[3.0, 7.0]);
        assert_eq!(reduce(&x, CHANNEL, Reduction::Max).unwrap().data(), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(reduce(&x, ALL, Reduction::Sum).unwrap().data(), &[28.0]);
        let g = Tensor::ones([1, 2, 1, 1]).unwrap();
        let dx = reduce_backward(&x, SPATIAL, Reduction::Max, &g).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let dx = reduce_backward(&x, SPATIAL, Reduction::Mean, &g).unwrap();
        assert_eq!(dx.data(), &[0.25; 8]);
    }
}
