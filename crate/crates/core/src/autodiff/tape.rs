use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::ops::activation::Activation;
use crate::ops::broadcast::{self, Axes, BinaryOp, Reduction};
use crate::ops::{channels, conv, sample};
use crate::spectral::{self, ComplexTensor, ComplexWeights};
use crate::tensor::{SamplingGrid, Shape, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Value carried by a tape node (and by its gradient).
#[derive(Debug, Clone, PartialEq)]
pub enum Value<T: Element> {
    Real(Tensor<T>),
    Complex(ComplexTensor<T>),
    Grid(SamplingGrid<T>),
}

impl<T: Element> Value<T> {
    fn kind(&self) -> &'static str {
        match self {
            Value::Real(_) => "real",
            Value::Complex(_) => "complex",
            Value::Grid(_) => "grid",
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            Value::Real(t) => t.shape().to_vec(),
            Value::Complex(c) => c.shape().to_vec(),
            Value::Grid(g) => g.shape().to_vec(),
        }
    }

    fn accumulate(self, other: Value<T>) -> Result<Value<T>> {
        Ok(match (self, other) {
            (Value::Real(a), Value::Real(b)) => Value::Real(a.add(&b)?),
            (Value::Complex(a), Value::Complex(b)) => {
                Value::Complex(ComplexTensor::new(a.re.add(&b.re)?, a.im.add(&b.im)?)?)
            }
            (Value::Grid(a), Value::Grid(b)) => {
                if a.shape() != b.shape() {
                    return Err(Error::dim("accumulate", "grid gradient shapes differ"));
                }
                let sum = a.coords().iter().zip(b.coords()).map(|(&x, &y)| x + y).collect();
                Value::Grid(SamplingGrid::new(a.shape(), sum)?)
            }
            (a, b) => {
                return Err(Error::dim(
                    "accumulate",
                    format!("cannot add {} gradient to {}", b.kind(), a.kind()),
                ))
            }
        })
    }
}

/// Maps an offset tensor onto a sampling grid:
/// `grid[e] = base[e] + scale · offsets[index[e]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub grid_shape: [usize; 5],
    pub offsets_shape: Shape,
    pub base: Vec<f64>,
    pub index: Vec<usize>,
    pub scale: f64,
}

impl GridMap {
    pub fn apply<T: Element>(&self, offsets: &Tensor<T>) -> Result<SamplingGrid<T>> {
        if offsets.shape() != self.offsets_shape {
            return Err(Error::dim(
                "grid_map",
                format!("offsets {:?} != expected {:?}", offsets.shape(), self.offsets_shape),
            ));
        }
        let off = offsets.data();
        let k = T::from_f64(self.scale);
        let coords = self
            .base
            .iter()
            .zip(&self.index)
            .map(|(&b, &i)| T::from_f64(b) + k * off[i])
            .collect();
        SamplingGrid::new(self.grid_shape, coords)
    }

    fn backward<T: Element>(&self, grad: &SamplingGrid<T>) -> Result<Tensor<T>> {
        let mut d = vec![T::zero(); self.offsets_shape.iter().product()];
        let k = T::from_f64(self.scale);
        for (&i, &g) in self.index.iter().zip(grad.coords()) {
            d[i] = d[i] + k * g;
        }
        Tensor::from_op("grid_map_backward", self.offsets_shape, d)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(BinaryOp),
    Scale(f64),
    Conv2d { stride: usize, padding: usize },
    Depthwise,
    Act(Activation),
    SliceChannels { start: usize },
    Concat,
    Reduce { axes: Axes, kind: Reduction },
    Fft2,
    ComplexParts,
    Modulate,
    Ifft2Real,
    GridFromOffsets(Arc<GridMap>),
    BilinearSample,
    SamplePoints,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Binary(BinaryOp::Add) => "add",
            Op::Binary(BinaryOp::Mul) => "mul",
            Op::Scale(_) => "scale",
            Op::Conv2d { .. } => "conv2d",
            Op::Depthwise => "depthwise_conv2d",
            Op::Act(a) => a.name(),
            Op::SliceChannels { .. } => "slice_channels",
            Op::Concat => "concat_channels",
            Op::Reduce { .. } => "reduce",
            Op::Fft2 => "fft2",
            Op::ComplexParts => "complex",
            Op::Modulate => "modulate",
            Op::Ifft2Real => "ifft2",
            Op::GridFromOffsets(_) => "grid_from_offsets",
            Op::BilinearSample => "bilinear_sample",
            Op::SamplePoints => "sample_points",
        }
    }
}

#[derive(Debug)]
struct Node<T: Element> {
    op: Op,
    inputs: Vec<Var>,
    value: Value<T>,
    name: Option<String>,
}

/// Ordered record of executed operations. Nodes are appended as operations
/// run, so every node's inputs precede it.
#[derive(Debug)]
pub struct Tape<T: Element = f64> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Value<T>) -> Var {
        self.nodes.push(Node { op, inputs, value, name: None });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input. It receives a gradient but is not reported
    /// by name.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, vec![], Value::Real(t))
    }

    /// Records a named learnable leaf.
    pub fn param(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<Var> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::arg("tape", format!("parameter `{name}` registered twice")));
        }
        let v = self.push(Op::Leaf, vec![], Value::Real(t));
        self.nodes[v.0].name = Some(name.clone());
        self.params.insert(name, v);
        Ok(v)
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn value(&self, v: Var) -> &Value<T> {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> Result<&Tensor<T>> {
        match &self.nodes[v.0].value {
            Value::Real(t) => Ok(t),
            other => Err(Error::dim(
                "tape",
                format!("node #{} holds a {} value, expected real", v.0, other.kind()),
            )),
        }
    }

    pub fn complex(&self, v: Var) -> Result<&ComplexTensor<T>> {
        match &self.nodes[v.0].value {
            Value::Complex(c) => Ok(c),
            other => Err(Error::dim(
                "tape",
                format!("node #{} holds a {} value, expected complex", v.0, other.kind()),
            )),
        }
    }

    pub fn grid(&self, v: Var) -> Result<&SamplingGrid<T>> {
        match &self.nodes[v.0].value {
            Value::Grid(g) => Ok(g),
            other => Err(Error::dim(
                "tape",
                format!("node #{} holds a {} value, expected grid", v.0, other.kind()),
            )),
        }
    }

    pub fn shape(&self, v: Var) -> Result<Shape> {
        Ok(self.real(v)?.shape())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    /// Broadcasting elementwise `a ∘ b`.
    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let out = broadcast::broadcast(op, self.real(a)?, self.real(b)?)?;
        Ok(self.push(Op::Binary(op), vec![a, b], Value::Real(out)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.real(a)?.scale(T::from_f64(k))?;
        Ok(self.push(Op::Scale(k), vec![a], Value::Real(out)))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let b = bias.map(|b| self.real(b)).transpose()?;
        let out = conv::conv2d(self.real(x)?, self.real(weight)?, b, stride, padding)?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.push(Op::Conv2d { stride, padding }, inputs, Value::Real(out)))
    }

    pub fn depthwise_conv2d(&mut self, x: Var, weight: Var) -> Result<Var> {
        let out = conv::depthwise_conv2d(self.real(x)?, self.real(weight)?)?;
        Ok(self.push(Op::Depthwise, vec![x, weight], Value::Real(out)))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var> {
        let out = act.forward(self.real(x)?)?;
        Ok(self.push(Op::Act(act), vec![x], Value::Real(out)))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Silu)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = channels::slice_channels(self.real(x)?, start, len)?;
        Ok(self.push(Op::SliceChannels { start }, vec![x], Value::Real(out)))
    }

    pub fn split_channels(&mut self, x: Var, sizes: &[usize]) -> Result<Vec<Var>> {
        let c = self.shape(x)?[1];
        if sizes.iter().sum::<usize>() != c || sizes.contains(&0) {
            return Err(Error::dim(
                "split_channels",
                format!("sizes {sizes:?} do not partition {c} channels"),
            ));
        }
        let mut start = 0;
        let mut parts = Vec::with_capacity(sizes.len());
        for &len in sizes {
            parts.push(self.slice_channels(x, start, len)?);
            start += len;
        }
        Ok(parts)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors = parts.iter().map(|&p| self.real(p)).collect::<Result<Vec<_>>>()?;
        let out = channels::concat_channels(&tensors)?;
        Ok(self.push(Op::Concat, parts.to_vec(), Value::Real(out)))
    }

    pub fn reduce(&mut self, x: Var, axes: Axes, kind: Reduction) -> Result<Var> {
        let out = broadcast::reduce(self.real(x)?, axes, kind)?;
        Ok(self.push(Op::Reduce { axes, kind }, vec![x], Value::Real(out)))
    }

    /// Sum of every element, as a `[1, 1, 1, 1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, broadcast::ALL, Reduction::Sum)
    }

    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let out = spectral::fft2(self.real(x)?)?;
        Ok(self.push(Op::Fft2, vec![x], Value::Complex(out)))
    }

    /// Pairs two real nodes into one complex node.
    pub fn complex_from_parts(&mut self, re: Var, im: Var) -> Result<Var> {
        let out = ComplexTensor::new(self.real(re)?.clone(), self.real(im)?.clone())?;
        Ok(self.push(Op::ComplexParts, vec![re, im], Value::Complex(out)))
    }

    /// `s ⊙ w` where `w` is a `(1, C, H, W)` complex node.
    pub fn modulate(&mut self, s: Var, w: Var) -> Result<Var> {
        let weights = ComplexWeights::new(self.complex(w)?.clone())?;
        let out = spectral::modulate(self.complex(s)?, &weights)?;
        Ok(self.push(Op::Modulate, vec![s, w], Value::Complex(out)))
    }

    /// Inverse transform, real part.
    pub fn ifft2(&mut self, s: Var) -> Result<Var> {
        let out = spectral::ifft2(self.complex(s)?)?;
        Ok(self.push(Op::Ifft2Real, vec![s], Value::Real(out)))
    }

    pub fn grid_from_offsets(&mut self, offsets: Var, map: Arc<GridMap>) -> Result<Var> {
        let out = map.apply(self.real(offsets)?)?;
        Ok(self.push(Op::GridFromOffsets(map), vec![offsets], Value::Grid(out)))
    }

    pub fn bilinear_sample(&mut self, x: Var, grid: Var) -> Result<Var> {
        let out = sample::bilinear_sample(self.real(x)?, self.grid(grid)?)?;
        Ok(self.push(Op::BilinearSample, vec![x, grid], Value::Real(out)))
    }

    pub fn sample_points(&mut self, x: Var, grid: Var) -> Result<Var> {
        let out = sample::sample_points(self.real(x)?, self.grid(grid)?)?;
        Ok(self.push(Op::SamplePoints, vec![x, grid], Value::Real(out)))
    }

    /// Input gradients of node `i` given its output gradient.
    fn node_backward(&self, i: usize, g: &Value<T>) -> Result<Vec<Value<T>>> {
        let node = &self.nodes[i];
        let inp = |k: usize| &self.nodes[node.inputs[k].0].value;
        let real = |v: &Value<T>| -> Result<Tensor<T>> {
            match v {
                Value::Real(t) => Ok(t.clone()),
                other => Err(Error::dim(
                    "backward",
                    format!("node #{i} ({}) expected real, got {}", node.op.name(), other.kind()),
                )),
            }
        };
        let complex = |v: &Value<T>| -> Result<ComplexTensor<T>> {
            match v {
                Value::Complex(c) => Ok(c.clone()),
                other => Err(Error::dim(
                    "backward",
                    format!("node #{i} ({}) expected complex, got {}", node.op.name(), other.kind()),
                )),
            }
        };
        let grid = |v: &Value<T>| -> Result<SamplingGrid<T>> {
            match v {
                Value::Grid(s) => Ok(s.clone()),
                other => Err(Error::dim(
                    "backward",
                    format!("node #{i} ({}) expected grid, got {}", node.op.name(), other.kind()),
                )),
            }
        };

        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Binary(op) => {
                let (ga, gb) = broadcast::broadcast_backward(*op, &real(inp(0))?, &real(inp(1))?, &real(g)?)?;
                vec![Value::Real(ga), Value::Real(gb)]
            }
            Op::Scale(k) => vec![Value::Real(real(g)?.scale(T::from_f64(*k))?)],
            Op::Conv2d { stride, padding } => {
                let grads =
                    conv::conv2d_backward(&real(inp(0))?, &real(inp(1))?, &real(g)?, *stride, *padding)?;
                let mut out = vec![Value::Real(grads.input), Value::Real(grads.weight)];
                if node.inputs.len() == 3 {
                    out.push(Value::Real(grads.bias));
                }
                out
            }
            Op::Depthwise => {
                let (dx, dw) = conv::depthwise_conv2d_backward(&real(inp(0))?, &real(inp(1))?, &real(g)?)?;
                vec![Value::Real(dx), Value::Real(dw)]
            }
            Op::Act(a) => vec![Value::Real(a.backward(&real(inp(0))?, &real(g)?)?)],
            Op::SliceChannels { start } => {
                let x = real(inp(0))?;
                let g = real(g)?;
                let [n, c, h, w] = x.shape();
                let len = g.shape()[1];
                let plane = h * w;
                let mut d = vec![T::zero(); x.numel()];
                for b in 0..n {
                    let dst = (b * c + start) * plane;
                    d[dst..dst + len * plane]
                        .copy_from_slice(&g.data()[b * len * plane..(b + 1) * len * plane]);
                }
                vec![Value::Real(Tensor::from_op("slice_backward", x.shape(), d)?)]
            }
            Op::Concat => {
                let sizes = node
                    .inputs
                    .iter()
                    .map(|v| real(&self.nodes[v.0].value).map(|t| t.shape()[1]))
                    .collect::<Result<Vec<_>>>()?;
                channels::split_channels(&real(g)?, &sizes)?
                    .into_iter()
                    .map(Value::Real)
                    .collect()
            }
            Op::Reduce { axes, kind } => {
                vec![Value::Real(broadcast::reduce_backward(&real(inp(0))?, *axes, *kind, &real(g)?)?)]
            }
            Op::Fft2 => vec![Value::Real(spectral::fft2_backward(&complex(g)?)?)],
            Op::ComplexParts => {
                let g = complex(g)?;
                vec![Value::Real(g.re), Value::Real(g.im)]
            }
            Op::Modulate => {
                let w = ComplexWeights::new(complex(inp(1))?)?;
                let (ds, dw) = spectral::modulate_backward(&complex(inp(0))?, &w, &complex(g)?)?;
                vec![Value::Complex(ds), Value::Complex(dw)]
            }
            Op::Ifft2Real => vec![Value::Complex(spectral::ifft2_backward(&real(g)?)?)],
            Op::GridFromOffsets(map) => vec![Value::Real(map.backward(&grid(g)?)?)],
            Op::BilinearSample => {
                let (dx, dg) =
                    sample::bilinear_sample_backward(&real(inp(0))?, &grid(inp(1))?, &real(g)?)?;
                vec![Value::Real(dx), Value::Grid(dg)]
            }
            Op::SamplePoints => {
                let (dx, dg) = sample::sample_points_backward(&real(inp(0))?, &grid(inp(1))?, &real(g)?)?;
                vec![Value::Real(dx), Value::Grid(dg)]
            }
        })
    }
}

/// Gradients produced by [`backward`].
#[derive(Debug)]
pub struct Gradients<T: Element> {
    grads: Vec<Option<Value<T>>>,
    named: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a named parameter; unreachable parameters hold zeros.
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.named.get(name)
    }

    pub fn named(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.named
    }

    pub fn into_named(self) -> BTreeMap<String, Tensor<T>> {
        self.named
    }

    /// Gradient of any node, `None` if the output does not depend on it.
    pub fn of(&self, v: Var) -> Option<&Value<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Reverse-mode sweep from `output`, seeded with `seed` (ones when `None`).
///
/// Nodes are visited once each in reverse recording order; contributions to
/// a node are summed in that fixed order.
pub fn backward<T: Element>(tape: &Tape<T>, output: Var, seed: Option<Tensor<T>>) -> Result<Gradients<T>> {
    if tape.is_empty() || output.0 >= tape.len() {
        return Err(Error::arg("backward", "output is not a node of this tape"));
    }
    let out_val = tape.real(output)?;
    let seed = match seed {
        Some(s) if s.shape() != out_val.shape() => {
            return Err(Error::dim(
                "backward",
                format!("seed {:?} != output {:?}", s.shape(), out_val.shape()),
            ))
        }
        Some(s) => s,
        None => Tensor::ones(out_val.shape())?,
    };
    let mut grads: Vec<Option<Value<T>>> = vec![None; tape.len()];
    grads[output.0] = Some(Value::Real(seed));

    for i in (0..=output.0).rev() {
        let Some(g) = grads[i].take() else { continue };
        let node = &tape.nodes[i];
        if g.dims() != node.value.dims() || g.kind() != node.value.kind() {
            return Err(Error::dim(
                "backward",
                format!(
                    "node #{i} ({}): gradient {} {:?} does not match value {} {:?}",
                    node.op.name(),
                    g.kind(),
                    g.dims(),
                    node.value.kind(),
                    node.value.dims()
                ),
            ));
        }
        let input_grads = tape.node_backward(i, &g)?;
        for (&inp, ig) in node.inputs.iter().zip(input_grads) {
            let target = &tape.nodes[inp.0];
            if ig.dims() != target.value.dims() {
                return Err(Error::dim(
                    "backward",
                    format!(
                        "node #{i} ({}) sent gradient {:?} to node #{} of shape {:?}",
                        node.op.name(),
                        ig.dims(),
                        inp.0,
                        target.value.dims()
                    ),
                ));
            }
            grads[inp.0] = Some(match grads[inp.0].take() {
                Some(acc) => acc.accumulate(ig)?,
                None => ig,
            });
        }
        grads[i] = Some(g);
    }

    let mut named = BTreeMap::new();
    for (name, &v) in &tape.params {
        let t = match &grads[v.0] {
            Some(Value::Real(t)) => t.clone(),
            _ => Tensor::zeros(tape.real(v)?.shape())?,
        };
        named.insert(name.clone(), t);
    }
    Ok(Gradients { grads, named })
}
