//! Channel-axis split and concatenation.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Copies channels `start..start + len`.
pub fn slice_channels<T: Element>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    if len == 0 || start + len > c {
        return Err(Error::dim(
            "slice_channels",
            format!("channels {start}..{} out of range for C={c}", start + len),
        ));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * len * plane);
    for b in 0..n {
        let from = (b * c + start) * plane;
        data.extend_from_slice(&x.data()[from..from + len * plane]);
    }
    Tensor::from_op("slice_channels", [n, len, h, w], data)
}

pub fn split_channels<T: Element>(x: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let c = x.shape()[1];
    if sizes.iter().sum::<usize>() != c || sizes.contains(&0) {
        return Err(Error::dim(
            "split_channels",
            format!("sizes {sizes:?} do not partition {c} channels"),
        ));
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&len| {
            let part = slice_channels(x, start, len);
            start += len;
            part
        })
        .collect()
}

pub fn concat_channels<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::dim("concat_channels", "nothing to concatenate"))?;
    let [n, _, h, w] = first.shape();
    for p in parts {
        let [pn, _, ph, pw] = p.shape();
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::dim(
                "concat_channels",
                format!("shape {:?} incompatible with {:?}", p.shape(), first.shape()),
            ));
        }
    }
    let c: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * c * plane);
    for b in 0..n {
        for p in parts {
            let pc = p.shape()[1];
            data.extend_from_slice(&p.data()[b * pc * plane..(b + 1) * pc * plane]);
        }
    }
    Tensor::from_op("concat_channels", [n, c, h, w], data)
}
