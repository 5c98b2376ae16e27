//! Deformable downsampling with an arbitrary number of sample points.
//!
//! Output `(i, j)` reads every input channel at `P₀ + Pₙ + ΔPₙ` for each of
//! the `N` base points and mixes the `C_in·N` samples with a 1×1 conv.
//! Offsets `ΔPₙ` come from a 3×3 conv on the input with the same stride.

use std::sync::Arc;

use crate::autodiff::{GridMap, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::ops::{conv, sample};
use crate::params::{fan_in_std, Bound, Fill, ParamBlock, ParamSpec, ParamStore, Source};
use crate::tensor::{Shape, Tensor};

/// Zero-mean base offsets `(row, col)` for `n` sample points: the first `n`
/// cells of the smallest square grid holding them, in row-major order,
/// shifted by their centroid.
pub fn ldconv_coords(n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::arg("ldconv_coords", "need at least one sample point"));
    }
    let side = (1..).find(|b| b * b >= n).expect("unbounded search");
    let cells: Vec<(f64, f64)> = (0..n).map(|k| ((k / side) as f64, (k % side) as f64)).collect();
    let cr = cells.iter().map(|c| c.0).sum::<f64>() / n as f64;
    let cc = cells.iter().map(|c| c.1).sum::<f64>() / n as f64;
    Ok(cells.into_iter().map(|(r, c)| (r - cr, c - cc)).collect())
}

/// Where output `(i, j)` is anchored in the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorMode {
    /// `i·s + (s−1)/2`: the centre of the covered `s×s` cell.
    #[default]
    Centered,
    /// `i·s`: the cell's top-left pixel.
    Corner,
}

impl AnchorMode {
    pub fn anchor(self, i: usize, stride: usize) -> f64 {
        let base = (i * stride) as f64;
        match self {
            AnchorMode::Centered => base + (stride as f64 - 1.0) / 2.0,
            AnchorMode::Corner => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdconvConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub points: usize,
    pub stride: usize,
    pub anchor: AnchorMode,
}

impl LdconvConfig {
    pub fn new(in_channels: usize, out_channels: usize, points: usize, stride: usize) -> Self {
        LdconvConfig { in_channels, out_channels, points, stride, anchor: AnchorMode::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::arg("ldconv", "channel counts must be >= 1"));
        }
        if self.points == 0 {
            return Err(Error::arg("ldconv", "need at least one sample point"));
        }
        if self.stride == 0 {
            return Err(Error::arg("ldconv", "stride must be >= 1"));
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let (ci, co, n) = (self.in_channels, self.out_channels, self.points);
        let mix = Fill::Normal { mean: 0.0, std: fan_in_std(ci * n) };
        vec![
            ParamSpec::new(
                "offset.weight",
                [2 * n, ci, 3, 3],
                Fill::Zeros,
                Fill::Normal { mean: 0.0, std: 0.05 * fan_in_std(9 * ci) },
            ),
            ParamSpec::new("offset.bias", [1, 2 * n, 1, 1], Fill::Zeros, Fill::Normal { mean: 0.0, std: 0.02 }),
            ParamSpec::new("mix.weight", [co, ci * n, 1, 1], mix, mix),
        ]
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    /// Offset-to-grid map for a `batch × C_in × h × w` input. Offset channel
    /// `2n` moves point `n` along rows, `2n+1` along columns.
    pub fn grid_map(&self, batch: usize, h: usize, w: usize) -> Result<GridMap> {
        let coords = ldconv_coords(self.points)?;
        let (ho, wo) = self.out_hw(h, w);
        let n = self.points;
        let mut base = Vec::with_capacity(batch * n * ho * wo * 2);
        let mut index = Vec::with_capacity(base.capacity());
        for b in 0..batch {
            for (p, &(pr, pc)) in coords.iter().enumerate() {
                for i in 0..ho {
                    for j in 0..wo {
                        base.push(self.anchor.anchor(i, self.stride) + pr);
                        base.push(self.anchor.anchor(j, self.stride) + pc);
                        index.push(((b * 2 * n + 2 * p) * ho + i) * wo + j);
                        index.push(((b * 2 * n + 2 * p + 1) * ho + i) * wo + j);
                    }
                }
            }
        }
        Ok(GridMap {
            grid_shape: [batch, n, ho, wo, 2],
            offsets_shape: [batch, 2 * n, ho, wo],
            base,
            index,
            scale: 1.0,
        })
    }

    fn check_input(&self, shape: Shape) -> Result<()> {
        if shape[1] != self.in_channels {
            return Err(Error::dim(
                "ldconv",
                format!("expected {} input channels, got {shape:?}", self.in_channels),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdconvParams<T: Element = f64> {
    config: LdconvConfig,
    block: ParamBlock<T>,
}

impl<T: Element> LdconvParams<T> {
    pub fn new(config: LdconvConfig, source: Source, seed: u64) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::generate(config.specs(), source, seed)?;
        Ok(LdconvParams { config, block })
    }

    pub fn from_store(config: LdconvConfig, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::from_store(config.specs(), store, prefix)?;
        Ok(LdconvParams { config, block })
    }

    pub fn config(&self) -> &LdconvConfig {
        &self.config
    }

    pub fn block(&self) -> &ParamBlock<T> {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut ParamBlock<T> {
        &mut self.block
    }

    /// Stored mixing weights feeding each output channel (`C_in·N`).
    pub fn mixing_weights_per_output(&self) -> Result<usize> {
        let mix = self.block.get("mix.weight")?;
        Ok(mix.numel() / mix.shape()[0])
    }

    /// Offset-conv output for `x`: `(N, 2·points, H_out, W_out)`.
    pub fn offsets(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.config.check_input(x.shape())?;
        conv::conv2d(
            x,
            self.block.get("offset.weight")?,
            Some(self.block.get("offset.bias")?),
            self.config.stride,
            1,
        )
    }

    pub fn build(&self, tape: &mut Tape<T>, x: Var, prefix: &str) -> Result<Var> {
        let bound = self.block.register(tape, prefix)?;
        build(tape, x, &self.config, &bound, prefix)
    }
}

/// Records `ldconv(x)`; parameters must already be bound.
pub fn build<T: Element>(
    tape: &mut Tape<T>,
    x: Var,
    config: &LdconvConfig,
    bound: &Bound,
    prefix: &str,
) -> Result<Var> {
    let [n, _, h, w] = tape.shape(x)?;
    config.check_input(tape.shape(x)?)?;
    let off = tape.conv2d(
        x,
        bound.at(prefix, "offset.weight")?,
        Some(bound.at(prefix, "offset.bias")?),
        config.stride,
        1,
    )?;
    let grid = tape.grid_from_offsets(off, Arc::new(config.grid_map(n, h, w)?))?;
    let samples = tape.sample_points(x, grid)?;
    tape.conv2d(samples, bound.at(prefix, "mix.weight")?, None, 1, 0)
}

pub fn ldconv_forward<T: Element>(x: &Tensor<T>, p: &LdconvParams<T>) -> Result<Tensor<T>> {
    let [n, _, h, w] = x.shape();
    let grid = p.config.grid_map(n, h, w)?.apply(&p.offsets(x)?)?;
    let samples = sample::sample_points(x, &grid)?;
    conv::conv2d(&samples, p.block.get("mix.weight")?, None, 1, 0)
}
