//! Dense batch-major `N×C×H×W` tensors and sampling grids.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::element::Element;
use crate::error::{Error, Result};

/// `(N, C, H, W)`.
pub type Shape = [usize; 4];

pub fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

/// Immutable dense tensor. Every constructor rejects non-finite values, so a
/// `Tensor` in hand is always finite.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Element = f64> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &T::DTYPE)
            .finish_non_exhaustive()
    }
}

fn check_shape(op: &'static str, shape: &Shape) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::dim(op, format!("all dims must be >= 1, got {shape:?}")));
    }
    Ok(())
}

pub(crate) fn check_finite<T: Element>(op: &'static str, data: &[T]) -> Result<()> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            op,
            format!("non-finite value {} at flat index {pos}", data[pos]),
        ));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        Self::from_op("tensor", shape, data)
    }

    /// Validated constructor used by operators; `op` names the failing stage.
    pub(crate) fn from_op(op: &'static str, shape: Shape, data: Vec<T>) -> Result<Self> {
        check_shape(op, &shape)?;
        if data.len() != numel(&shape) {
            return Err(Error::dim(
                op,
                format!("data length {} does not match shape {shape:?}", data.len()),
            ));
        }
        check_finite(op, &data)?;
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: Shape, value: T) -> Result<Self> {
        Self::new(shape, vec![value; numel(&shape)])
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: Shape) -> Result<Self> {
        Self::full(shape, T::one())
    }

    /// Builds a tensor from `f(n, c, h, w)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(numel(&shape));
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    /// Samples i.i.d. `N(mean, std²)` values.
    pub fn randn<R: Rng + ?Sized>(shape: Shape, mean: f64, std: f64, rng: &mut R) -> Result<Self> {
        let data = (0..numel(&shape))
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                T::from_f64(mean + std * z)
            })
            .collect();
        Self::new(shape, data)
    }

    /// Samples i.i.d. values uniformly from `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let data = (0..numel(&shape))
            .map(|_| T::from_f64(rng.random_range(lo..hi)))
            .collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(n, c, h, w)]
    }

    /// Returns a copy with the flat element `i` replaced.
    pub fn with_value(&self, i: usize, value: T) -> Result<Self> {
        let mut data = self.data.clone();
        data[i] = value;
        Self::new(self.shape, data)
    }

    pub fn reshape(&self, shape: Shape) -> Result<Self> {
        if numel(&shape) != self.numel() {
            return Err(Error::dim(
                "reshape",
                format!("cannot reshape {:?} into {shape:?}", self.shape),
            ));
        }
        Ok(Tensor { shape, data: self.data.clone() })
    }

    pub fn map(&self, op: &'static str, f: impl Fn(T) -> T) -> Result<Self> {
        Self::from_op(op, self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(
                op,
                format!("shapes {:?} and {:?} differ", self.shape, other.shape),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::from_op(op, self.shape, data)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Result<Self> {
        self.map("scale", |v| v * k)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        (self.shape == other.shape).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
        })
    }

    /// Per-channel `(min, max)` across batch and spatial positions.
    pub fn channel_range(&self, c: usize) -> (T, T) {
        let [n, _, h, w] = self.shape;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for b in 0..n {
            let start = self.index(b, c, 0, 0);
            for &v in &self.data[start..start + h * w] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    pub fn cast<U: Element>(&self) -> Result<Tensor<U>> {
        Tensor::from_op(
            "cast",
            self.shape,
            self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        )
    }
}

/// Per-output-location fractional `(row, col)` source coordinates, shaped
/// `(N, groups, H_out, W_out, 2)`. Coordinates are in source-pixel units with
/// the origin at the centre of pixel `(0, 0)` and may lie outside the image.
#[derive(Clone, PartialEq)]
pub struct SamplingGrid<T: Element = f64> {
    shape: [usize; 5],
    coords: Vec<T>,
}

impl<T: Element> std::fmt::Debug for SamplingGrid<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SamplingGrid").field("shape", &self.shape).finish_non_exhaustive()
    }
}

impl<T: Element> SamplingGrid<T> {
    pub fn new(shape: [usize; 5], coords: Vec<T>) -> Result<Self> {
        if shape[4] != 2 {
            return Err(Error::dim(
                "sampling_grid",
                format!("last dim must be 2 (row, col), got {}", shape[4]),
            ));
        }
        if shape[..4].contains(&0) {
            return Err(Error::dim("sampling_grid", format!("empty grid {shape:?}")));
        }
        if coords.len() != shape.iter().product::<usize>() {
            return Err(Error::dim(
                "sampling_grid",
                format!("{} coords for shape {shape:?}", coords.len()),
            ));
        }
        check_finite("sampling_grid", &coords)?;
        Ok(SamplingGrid { shape, coords })
    }

    /// Grid whose output `(i, j)` samples source `(i, j)`.
    pub fn identity(batch: usize, groups: usize, h: usize, w: usize) -> Result<Self> {
        let mut coords = Vec::with_capacity(batch * groups * h * w * 2);
        for _ in 0..batch * groups {
            for i in 0..h {
                for j in 0..w {
                    coords.push(T::from_f64(i as f64));
                    coords.push(T::from_f64(j as f64));
                }
            }
        }
        Self::new([batch, groups, h, w, 2], coords)
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn groups(&self) -> usize {
        self.shape[1]
    }

    pub fn out_hw(&self) -> (usize, usize) {
        (self.shape[2], self.shape[3])
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    #[inline]
    pub fn offset(&self, n: usize, g: usize, i: usize, j: usize) -> usize {
        let [_, gs, hs, ws, _] = self.shape;
        (((n * gs + g) * hs + i) * ws + j) * 2
    }

    /// `(row, col)` at output location `(i, j)` of group `g`.
    #[inline]
    pub fn at(&self, n: usize, g: usize, i: usize, j: usize) -> (T, T) {
        let o = self.offset(n, g, i, j);
        (self.coords[o], self.coords[o + 1])
    }
}
