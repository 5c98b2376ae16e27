//! Multi-scale gated residual block.
//!
//! `y = x + shrink(msdw(gelu(X)) ⊙ σ(V))` where `[X, V]` is a 1×1 expansion of
//! `x` split in half and `msdw` sums bias-free depthwise convolutions at
//! several kernel sizes.

use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::ops::{self, conv};
use crate::params::{fan_in_std, Bound, Fill, ParamBlock, ParamSpec, ParamStore, Source};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgrbConfig {
    pub channels: usize,
    /// Depthwise kernel sizes, each odd.
    pub kernels: Vec<usize>,
}

impl MsgrbConfig {
    pub fn new(channels: usize) -> Self {
        MsgrbConfig { channels, kernels: vec![3, 5, 7] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::arg("msgrb", "channels must be >= 1"));
        }
        if self.kernels.is_empty() {
            return Err(Error::arg("msgrb", "at least one kernel size is required"));
        }
        if let Some(k) = self.kernels.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::arg("msgrb", format!("kernel size {k} is not odd")));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let c = self.channels;
        let mut specs = vec![
            ParamSpec::new(
                "expand.weight",
                [2 * c, c, 1, 1],
                Fill::Normal { mean: 0.0, std: fan_in_std(c) },
                Fill::Normal { mean: 0.0, std: fan_in_std(c) },
            ),
            ParamSpec::new(
                "expand.bias",
                [1, 2 * c, 1, 1],
                Fill::Zeros,
                Fill::Normal { mean: 0.0, std: 0.5 },
            ),
        ];
        for &k in &self.kernels {
            let std = fan_in_std(k * k);
            specs.push(ParamSpec::new(
                format!("dw{k}.weight"),
                [c, 1, k, k],
                Fill::Normal { mean: 0.0, std },
                Fill::Normal { mean: 0.0, std },
            ));
        }
        specs.push(ParamSpec::new(
            "shrink.weight",
            [c, c, 1, 1],
            Fill::Zeros,
            Fill::Normal { mean: 0.0, std: fan_in_std(c) },
        ));
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsgrbParams<T: Element = f64> {
    config: MsgrbConfig,
    block: ParamBlock<T>,
}

impl<T: Element> MsgrbParams<T> {
    pub fn new(config: MsgrbConfig, source: Source, seed: u64) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::generate(config.specs(), source, seed)?;
        Ok(MsgrbParams { config, block })
    }

    pub fn from_store(config: MsgrbConfig, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::from_store(config.specs(), store, prefix)?;
        Ok(MsgrbParams { config, block })
    }

    pub fn config(&self) -> &MsgrbConfig {
        &self.config
    }

    pub fn block(&self) -> &ParamBlock<T> {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut ParamBlock<T> {
        &mut self.block
    }

    pub fn kernel(&self, k: usize) -> Result<&Tensor<T>> {
        self.block.get(&format!("dw{k}.weight"))
    }

    /// Records `msgrb(x)` on `tape`, registering parameters under `prefix`.
    pub fn build(&self, tape: &mut Tape<T>, x: Var, prefix: &str) -> Result<Var> {
        let bound = self.block.register(tape, prefix)?;
        build(tape, x, &self.config, &bound, prefix)
    }
}

fn check_input(config: &MsgrbConfig, shape: [usize; 4]) -> Result<()> {
    if shape[1] != config.channels {
        return Err(Error::dim(
            "msgrb",
            format!("expected {} channels, got {:?}", config.channels, shape),
        ));
    }
    Ok(())
}

/// Records the gated unit alone (without the residual).
pub fn build_gated_unit<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    config: &MsgrbConfig,
    bound: &Bound,
    prefix: &str,
) -> Result<Var> {
    check_input(config, tape.shape(x)?)?;
    let c = config.channels;
    let e = tape.conv2d(
        x,
        bound.at(prefix, "expand.weight")?,
        Some(bound.at(prefix, "expand.bias")?),
        1,
        0,
    )?;
    let parts = tape.split_channels(e, &[c, c])?;
    let a = tape.gelu(parts[0])?;
    let mut acc: Option<Var> = None;
    for &k in &config.kernels {
        let d = tape.depthwise_conv2d(a, bound.at(prefix, &format!("dw{k}.weight"))?)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, d)?,
            None => d,
        });
    }
    let gate = tape.sigmoid(parts[1])?;
    let m = tape.mul(acc.expect("kernels validated non-empty"), gate)?;
    tape.conv2d(m, bound.at(prefix, "shrink.weight")?, None, 1, 0)
}

/// Records `x + gated_unit(x)`; parameters must already be bound.
pub fn build<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    config: &MsgrbConfig,
    bound: &Bound,
    prefix: &str,
) -> Result<Var> {
    let g = build_gated_unit(tape, x, config, bound, prefix)?;
    tape.add(x, g)
}

/// Sum of bias-free depthwise convolutions, one per kernel.
pub fn msdwconv<T: Element>(x: &Tensor<T>, kernels: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let (first, rest) = kernels
        .split_first()
        .ok_or_else(|| Error::arg("msdwconv", "no kernels"))?;
    let mut acc = conv::depthwise_conv2d(x, first)?;
    for k in rest {
        acc = acc.add(&conv::depthwise_conv2d(x, k)?)?;
    }
    Ok(acc)
}

/// The gated unit `shrink(msdw(gelu(X)) ⊙ σ(V))`.
pub fn ms_gu<T: Element>(x: &Tensor<T>, p: &MsgrbParams<T>) -> Result<Tensor<T>> {
    let cfg = &p.config;
    check_input(cfg, x.shape())?;
    let b = &p.block;
    let e = conv::conv2d(x, b.get("expand.weight")?, Some(b.get("expand.bias")?), 1, 0)?;
    let parts = ops::split_channels(&e, &[cfg.channels, cfg.channels])?;
    let a = ops::gelu(&parts[0])?;
    let kernels = cfg
        .kernels
        .iter()
        .map(|&k| p.kernel(k))
        .collect::<Result<Vec<_>>>()?;
    let d = msdwconv(&a, &kernels)?;
    let m = d.mul(&ops::sigmoid(&parts[1])?)?;
    conv::conv2d(&m, b.get("shrink.weight")?, None, 1, 0)
}

pub fn msgrb_forward<T: Element>(x: &Tensor<T>, p: &MsgrbParams<T>) -> Result<Tensor<T>> {
    x.add(&ms_gu(x, p)?)
}
