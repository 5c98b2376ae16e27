//! Dynamic upsampling: bilinear resampling at a uniform sub-cell grid moved
//! by content-predicted offsets, `grid_sample(x, G + λ·linear(x))`.

use std::sync::Arc;

use crate::autodiff::{GridMap, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::ops::{conv, sample};
use crate::params::{fan_in_std, Bound, Fill, ParamBlock, ParamSpec, ParamStore, Source};
use crate::tensor::{SamplingGrid, Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DysampleConfig {
    pub channels: usize,
    pub scale: usize,
    pub groups: usize,
    /// Scope factor `λ` applied to the offset head.
    pub scope: f64,
}

impl DysampleConfig {
    pub fn new(channels: usize, scale: usize) -> Self {
        DysampleConfig { channels, scale, groups: 1, scope: 0.25 }
    }

    /// `2·g·s²`.
    pub fn head_channels(&self) -> usize {
        2 * self.groups * self.scale * self.scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::arg("dysample", format!("scale must be >= 2, got {}", self.scale)));
        }
        if self.groups == 0 || self.channels == 0 || !self.channels.is_multiple_of(self.groups) {
            return Err(Error::arg(
                "dysample",
                format!("{} channels do not split into {} groups", self.channels, self.groups),
            ));
        }
        if !self.scope.is_finite() {
            return Err(Error::arg("dysample", "scope must be finite"));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let (c, k) = (self.channels, self.head_channels());
        vec![
            ParamSpec::new(
                "offset.weight",
                [k, c, 1, 1],
                Fill::Zeros,
                Fill::Normal { mean: 0.0, std: 0.2 * fan_in_std(c) },
            ),
            ParamSpec::new("offset.bias", [1, k, 1, 1], Fill::Zeros, Fill::Normal { mean: 0.0, std: 0.05 }),
        ]
    }

    /// Uniform sub-cell position of output index `o` along one axis.
    pub fn base_coord(&self, o: usize) -> f64 {
        (o as f64 + 0.5) / self.scale as f64 - 0.5
    }

    /// Offset-to-grid map for a `batch × C × h × w` input. Head channel
    /// `d·g·s² + k·s² + a·s + b` moves sub-position `(a, b)` of group `k`
    /// along rows (`d = 0`) or columns (`d = 1`).
    pub fn grid_map(&self, batch: usize, h: usize, w: usize) -> GridMap {
        let (s, g) = (self.scale, self.groups);
        let (ho, wo) = (s * h, s * w);
        let k = self.head_channels();
        let mut base = Vec::with_capacity(batch * g * ho * wo * 2);
        let mut index = Vec::with_capacity(base.capacity());
        for b in 0..batch {
            for grp in 0..g {
                for i in 0..ho {
                    for j in 0..wo {
                        let sub = grp * s * s + (i % s) * s + j % s;
                        let at = |ch: usize| ((b * k + ch) * h + i / s) * w + j / s;
                        base.push(self.base_coord(i));
                        base.push(self.base_coord(j));
                        index.push(at(sub));
                        index.push(at(g * s * s + sub));
                    }
                }
            }
        }
        GridMap {
            grid_shape: [batch, g, ho, wo, 2],
            offsets_shape: [batch, k, h, w],
            base,
            index,
            scale: self.scope,
        }
    }

    fn check_input(&self, shape: Shape) -> Result<()> {
        if shape[1] != self.channels {
            return Err(Error::dim(
                "dysample",
                format!("expected {} channels, got {shape:?}", self.channels),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DysampleParams<T: Element = f64> {
    config: DysampleConfig,
    block: ParamBlock<T>,
}

impl<T: Element> DysampleParams<T> {
    pub fn new(config: DysampleConfig, source: Source, seed: u64) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::generate(config.specs(), source, seed)?;
        Ok(DysampleParams { config, block })
    }

    pub fn from_store(config: DysampleConfig, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::from_store(config.specs(), store, prefix)?;
        Ok(DysampleParams { config, block })
    }

    pub fn config(&self) -> &DysampleConfig {
        &self.config
    }

    pub fn block(&self) -> &ParamBlock<T> {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut ParamBlock<T> {
        &mut self.block
    }

    /// Raw offset-head output `linear(x)`, before scaling by `λ`.
    pub fn offset_head(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.config.check_input(x.shape())?;
        conv::conv2d(
            x,
            self.block.get("offset.weight")?,
            Some(self.block.get("offset.bias")?),
            1,
            0,
        )
    }

    /// `G + λ·linear(x)`.
    pub fn sampling_grid(&self, x: &Tensor<T>) -> Result<SamplingGrid<T>> {
        let [n, _, h, w] = x.shape();
        self.config.grid_map(n, h, w).apply(&self.offset_head(x)?)
    }

    /// Largest per-axis distance between the sampling grid for `x` and the
    /// base grid.
    pub fn scope_deviation(&self, x: &Tensor<T>) -> Result<T> {
        let [n, _, h, w] = x.shape();
        let grid = self.sampling_grid(x)?;
        let base = &self.config.grid_map(n, h, w).base;
        Ok(grid
            .coords()
            .iter()
            .zip(base)
            .fold(T::zero(), |m, (&g, &b)| m.max((g - T::from_f64(b)).abs())))
    }

    /// Rescales every head row (weights and bias) to L1 norm `limit`, so
    /// inputs in `[-1, 1]` give head outputs in `[-limit, limit]`.
    pub fn bound_head(&mut self, limit: f64) -> Result<()> {
        let w = self.block.get("offset.weight")?.clone();
        let b = self.block.get("offset.bias")?.clone();
        let [k, c, _, _] = w.shape();
        let norms: Vec<f64> = (0..k)
            .map(|o| {
                let row: f64 = (0..c).map(|i| w.at(o, i, 0, 0).as_f64().abs()).sum();
                (row + b.at(0, o, 0, 0).as_f64().abs()).max(f64::MIN_POSITIVE)
            })
            .collect();
        let rescale = |v: T, o: usize| T::from_f64(limit * v.as_f64() / norms[o]);
        let w = Tensor::from_fn([k, c, 1, 1], |o, i, _, _| rescale(w.at(o, i, 0, 0), o))?;
        let b = Tensor::from_fn([1, k, 1, 1], |_, o, _, _| rescale(b.at(0, o, 0, 0), o))?;
        self.block.set("offset.weight", w)?;
        self.block.set("offset.bias", b)
    }

    pub fn build(&self, tape: &mut Tape<T>, x: Var, prefix: &str) -> Result<Var> {
        let bound = self.block.register(tape, prefix)?;
        build(tape, x, &self.config, &bound, prefix)
    }
}

/// Records `dysample(x)`; parameters must already be bound.
pub fn build<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    config: &DysampleConfig,
    bound: &Bound,
    prefix: &str,
) -> Result<Var> {
    let shape = tape.shape(x)?;
    config.check_input(shape)?;
    let off = tape.conv2d(
        x,
        bound.at(prefix, "offset.weight")?,
        Some(bound.at(prefix, "offset.bias")?),
        1,
        0,
    )?;
    let grid = tape.grid_from_offsets(off, Arc::new(config.grid_map(shape[0], shape[2], shape[3])))?;
    tape.bilinear_sample(x, grid)
}

pub fn dysample_forward<T: Element>(x: &Tensor<T>, p: &DysampleParams<T>) -> Result<Tensor<T>> {
    sample::bilinear_sample(x, &p.sampling_grid(x)?)
}
