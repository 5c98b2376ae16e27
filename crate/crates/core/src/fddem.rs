//! Frequency-domain detail enhancement.
//!
//! `y = spatial(x) + A(f) ⊙ f` with
//! `f = compress(concat_i ifft2(modulate(fft2(x), Wⁱ)))`,
//! `spatial(x) = x + conv(gelu(conv(x)))` and `A` a channel/spatial dual
//! attention map `σ(z_c + z_s)`.

use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::ops::broadcast::{BinaryOp, CHANNEL, SPATIAL};
use crate::ops::{self, conv, Reduction};
use crate::params::{fan_in_std, Bound, Fill, ParamBlock, ParamSpec, ParamStore, Source};
use crate::spectral::{self, ComplexTensor, ComplexWeights};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FddemConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub branches: usize,
    /// Channel-attention reduction ratio; hidden width is `channels / reduction`.
    pub reduction: usize,
}

const SMALL: Fill = Fill::Normal { mean: 0.0, std: 0.1 };

fn normal(fan_in: usize) -> Fill {
    Fill::Normal { mean: 0.0, std: fan_in_std(fan_in) }
}

impl FddemConfig {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        FddemConfig { channels, height, width, branches: 3, reduction: 4 }
    }

    pub fn hidden(&self) -> usize {
        self.channels / self.reduction
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::arg("fddem", format!("empty configuration {self:?}")));
        }
        if self.branches == 0 {
            return Err(Error::arg("fddem", "at least one frequency branch is required"));
        }
        if self.reduction == 0 || self.channels < self.reduction {
            return Err(Error::dim(
                "fddem",
                format!("channels {} < reduction {}", self.channels, self.reduction),
            ));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let bc = self.branches * c;
        let r = self.hidden();
        let mut specs = vec![
            ParamSpec::new("spatial.conv1.weight", [c, c, 3, 3], normal(9 * c), normal(9 * c)),
            ParamSpec::new("spatial.conv1.bias", [1, c, 1, 1], Fill::Zeros, SMALL),
            ParamSpec::new("spatial.conv2.weight", [c, c, 3, 3], Fill::Zeros, normal(9 * c)),
            ParamSpec::new("spatial.conv2.bias", [1, c, 1, 1], Fill::Zeros, SMALL),
        ];
        for i in 0..self.branches {
            specs.push(ParamSpec::new(
                format!("freq{i}.re"),
                [1, c, h, w],
                Fill::Ones,
                Fill::Normal { mean: 1.0, std: 0.3 },
            ));
            specs.push(ParamSpec::new(format!("freq{i}.im"), [1, c, h, w], Fill::Zeros, Fill::Normal {
                mean: 0.0,
                std: 0.3,
            }));
        }
        specs.extend([
            ParamSpec::new("compress.weight", [c, bc, 1, 1], Fill::Zeros, normal(bc)),
            ParamSpec::new("compress.bias", [1, c, 1, 1], Fill::Zeros, SMALL),
            ParamSpec::new("attn.fc1.weight", [r, c, 1, 1], normal(c), normal(c)),
            ParamSpec::new("attn.fc1.bias", [1, r, 1, 1], Fill::Zeros, SMALL),
            ParamSpec::new("attn.fc2.weight", [c, r, 1, 1], normal(r), normal(r)),
            ParamSpec::new("attn.fc2.bias", [1, c, 1, 1], Fill::Zeros, SMALL),
            ParamSpec::new("attn.spatial.weight", [1, 2, 7, 7], normal(98), normal(98)),
            ParamSpec::new("attn.spatial.bias", [1, 1, 1, 1], Fill::Zeros, SMALL),
        ]);
        specs
    }

    fn check_input(&self, shape: Shape) -> Result<()> {
        if shape[1..] != [self.channels, self.height, self.width] {
            return Err(Error::dim(
                "fddem",
                format!(
                    "input {shape:?} does not match declared (C,H,W) = ({}, {}, {})",
                    self.channels, self.height, self.width
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FddemParams<T: Element = f64> {
    config: FddemConfig,
    block: ParamBlock<T>,
}

impl<T: Element> FddemParams<T> {
    pub fn new(config: FddemConfig, source: Source, seed: u64) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::generate(config.specs(), source, seed)?;
        Ok(FddemParams { config, block })
    }

    pub fn from_store(config: FddemConfig, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::from_store(config.specs(), store, prefix)?;
        Ok(FddemParams { config, block })
    }

    pub fn config(&self) -> &FddemConfig {
        &self.config
    }

    pub fn block(&self) -> &ParamBlock<T> {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut ParamBlock<T> {
        &mut self.block
    }

    pub fn weights(&self, branch: usize) -> Result<ComplexWeights<T>> {
        ComplexWeights::new(ComplexTensor::new(
            self.block.get(&format!("freq{branch}.re"))?.clone(),
            self.block.get(&format!("freq{branch}.im"))?.clone(),
        )?)
    }

    pub fn build(&self, tape: &mut Tape<T>, x: Var, prefix: &str) -> Result<Var> {
        let bound = self.block.register(tape, prefix)?;
        build(tape, x, &self.config, &bound, prefix)
    }
}

/// Records the attention map for `f` using the `attn.*` parameters.
pub fn build_dual_attention<T: Element>(
    tape: &mut Tape<T>,
    f: Var,
    bound: &Bound,
    prefix: &str,
) -> Result<Var> {
    let fc1 = bound.at(prefix, "attn.fc1.weight")?;
    let fb1 = bound.at(prefix, "attn.fc1.bias")?;
    let fc2 = bound.at(prefix, "attn.fc2.weight")?;
    let fb2 = bound.at(prefix, "attn.fc2.bias")?;
    let mlp = |tape: &mut Tape<T>, v: Var| -> Result<Var> {
        let h = tape.conv2d(v, fc1, Some(fb1), 1, 0)?;
        let h = tape.silu(h)?;
        tape.conv2d(h, fc2, Some(fb2), 1, 0)
    };
    let avg = tape.reduce(f, SPATIAL, Reduction::Mean)?;
    let max = tape.reduce(f, SPATIAL, Reduction::Max)?;
    let za = mlp(tape, avg)?;
    let zm = mlp(tape, max)?;
    let zc = tape.add(za, zm)?;

    let ca = tape.sigmoid(zc)?;
    let scaled = tape.mul(f, ca)?;
    let mean_c = tape.reduce(scaled, CHANNEL, Reduction::Mean)?;
    let max_c = tape.reduce(scaled, CHANNEL, Reduction::Max)?;
    let pooled = tape.concat_channels(&[mean_c, max_c])?;
    let zs = tape.conv2d(
        pooled,
        bound.at(prefix, "attn.spatial.weight")?,
        Some(bound.at(prefix, "attn.spatial.bias")?),
        1,
        3,
    )?;
    // (N,C,1,1) + (N,1,H,W) broadcasts to the full map.
    let z = tape.add(zc, zs)?;
    tape.sigmoid(z)
}

/// Records `fddem(x)`; parameters must already be bound.
pub fn build<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    config: &FddemConfig,
    bound: &Bound,
    prefix: &str,
) -> Result<Var> {
    config.check_input(tape.shape(x)?)?;
    let s = tape.conv2d(
        x,
        bound.at(prefix, "spatial.conv1.weight")?,
        Some(bound.at(prefix, "spatial.conv1.bias")?),
        1,
        1,
    )?;
    let s = tape.gelu(s)?;
    let s = tape.conv2d(
        s,
        bound.at(prefix, "spatial.conv2.weight")?,
        Some(bound.at(prefix, "spatial.conv2.bias")?),
        1,
        1,
    )?;
    let spatial = tape.add(x, s)?;

    let spectrum = tape.fft2(x)?;
    let mut outs = Vec::with_capacity(config.branches);
    for i in 0..config.branches {
        let w = tape.complex_from_parts(
            bound.at(prefix, &format!("freq{i}.re"))?,
            bound.at(prefix, &format!("freq{i}.im"))?,
        )?;
        let m = tape.modulate(spectrum, w)?;
        outs.push(tape.ifft2(m)?);
    }
    let cat = tape.concat_channels(&outs)?;
    let f = tape.conv2d(
        cat,
        bound.at(prefix, "compress.weight")?,
        Some(bound.at(prefix, "compress.bias")?),
        1,
        0,
    )?;
    let a = build_dual_attention(tape, f, bound, prefix)?;
    let af = tape.mul(a, f)?;
    tape.add(spatial, af)
}

fn mlp<T: Element>(v: &Tensor<T>, b: &ParamBlock<T>) -> Result<Tensor<T>> {
    let h = conv::conv2d(v, b.get("attn.fc1.weight")?, Some(b.get("attn.fc1.bias")?), 1, 0)?;
    conv::conv2d(&ops::silu(&h)?, b.get("attn.fc2.weight")?, Some(b.get("attn.fc2.bias")?), 1, 0)
}

/// Attention map `σ(z_c + z_s)` for `f`, values in `(0, 1)`.
pub fn dual_attention<T: Element>(f: &Tensor<T>, p: &FddemParams<T>) -> Result<Tensor<T>> {
    let b = &p.block;
    if f.shape()[1] != p.config.channels {
        return Err(Error::dim(
            "dual_attention",
            format!("expected {} channels, got {:?}", p.config.channels, f.shape()),
        ));
    }
    let zc = mlp(&ops::reduce(f, SPATIAL, Reduction::Mean)?, b)?
        .add(&mlp(&ops::reduce(f, SPATIAL, Reduction::Max)?, b)?)?;
    let scaled = ops::broadcast(BinaryOp::Mul, f, &ops::sigmoid(&zc)?)?;
    let pooled = ops::concat_channels(&[
        &ops::reduce(&scaled, CHANNEL, Reduction::Mean)?,
        &ops::reduce(&scaled, CHANNEL, Reduction::Max)?,
    ])?;
    let zs = conv::conv2d(&pooled, b.get("attn.spatial.weight")?, Some(b.get("attn.spatial.bias")?), 1, 3)?;
    ops::sigmoid(&ops::broadcast(BinaryOp::Add, &zc, &zs)?)
}

/// Compressed frequency feature `f`.
pub fn frequency_feature<T: Element>(x: &Tensor<T>, p: &FddemParams<T>) -> Result<Tensor<T>> {
    p.config.check_input(x.shape())?;
    let weights = (0..p.config.branches)
        .map(|i| p.weights(i))
        .collect::<Result<Vec<_>>>()?;
    let outs = spectral::multi_branch_enhance(x, &weights)?;
    let refs: Vec<&Tensor<T>> = outs.iter().collect();
    let b = &p.block;
    conv::conv2d(
        &ops::concat_channels(&refs)?,
        b.get("compress.weight")?,
        Some(b.get("compress.bias")?),
        1,
        0,
    )
}

pub fn spatial_branch<T: Element>(x: &Tensor<T>, p: &FddemParams<T>) -> Result<Tensor<T>> {
    p.config.check_input(x.shape())?;
    let b = &p.block;
    let s = conv::conv2d(x, b.get("spatial.conv1.weight")?, Some(b.get("spatial.conv1.bias")?), 1, 1)?;
    let s = conv::conv2d(
        &ops::gelu(&s)?,
        b.get("spatial.conv2.weight")?,
        Some(b.get("spatial.conv2.bias")?),
        1,
        1,
    )?;
    x.add(&s)
}

pub fn fddem_forward<T: Element>(x: &Tensor<T>, p: &FddemParams<T>) -> Result<Tensor<T>> {
    let f = frequency_feature(x, p)?;
    let a = dual_attention(&f, p)?;
    spatial_branch(x, p)?.add(&a.mul(&f)?)
}
