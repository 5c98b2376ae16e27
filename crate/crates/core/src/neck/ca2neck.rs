//! Three-level pyramid neck: one top-down pass (dynamic upsampling) then one
//! bottom-up pass (deformable stride-2 downsampling). Every merge is
//! `concat → 1×1 conv → MS-GRB`.
//!
//! ```text
//! T4 = fuse(merge(up(P5), P4))      O3 = fuse(merge(up(T4), P3))
//! O4 = fuse(merge(down(O3), T4))    O5 = fuse(merge(down(O4), P5))
//! ```
//!
//! Merge convs start as pass-through of their lateral input, so a freshly
//! built neck returns its input pyramid unchanged.

use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::msgrb::{self, MsgrbConfig, MsgrbParams};
use crate::ops::{self, conv};
use crate::params::{fan_in_std, join, nest, Bound, Fill, ParamBlock, ParamSpec, ParamStore, Source};
use crate::tensor::{Shape, Tensor};

use super::dysample::{self, DysampleConfig, DysampleParams};
use super::ldconv::{self, LdconvConfig, LdconvParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Ca2NeckConfig {
    /// Channels at strides 8, 16 and 32.
    pub channels: [usize; 3],
    /// Deformable sample points per downsampling step.
    pub points: usize,
    pub groups: usize,
    pub scope: f64,
    pub kernels: Vec<usize>,
}

/// One merge: `fuse(conv1x1(concat(moved, lateral)))`.
struct Merge {
    name: &'static str,
    moved: usize,
    lateral: usize,
}

impl Ca2NeckConfig {
    pub fn new(channels: [usize; 3]) -> Self {
        Ca2NeckConfig { channels, points: 5, groups: 1, scope: 0.25, kernels: vec![3, 5, 7] }
    }

    fn up(&self, c: usize) -> DysampleConfig {
        DysampleConfig { channels: c, scale: 2, groups: self.groups, scope: self.scope }
    }

    fn down(&self, c: usize) -> LdconvConfig {
        LdconvConfig::new(c, c, self.points, 2)
    }

    fn fuse(&self, c: usize) -> MsgrbConfig {
        MsgrbConfig { channels: c, kernels: self.kernels.clone() }
    }

    fn merges(&self) -> [Merge; 4] {
        let [c3, c4, c5] = self.channels;
        [
            Merge { name: "td.merge4", moved: c5, lateral: c4 },
            Merge { name: "td.merge3", moved: c4, lateral: c3 },
            Merge { name: "bu.merge4", moved: c3, lateral: c4 },
            Merge { name: "bu.merge5", moved: c4, lateral: c5 },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) {
            return Err(Error::arg("ca2neck", "channel counts must be >= 1"));
        }
        let [c3, c4, c5] = self.channels;
        self.up(c5).validate()?;
        self.up(c4).validate()?;
        self.down(c3).validate()?;
        self.fuse(c3).validate()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let [c3, c4, c5] = self.channels;
        let mut specs = Vec::new();
        specs.extend(nest("td.up5", self.up(c5).specs()));
        specs.extend(nest("td.up4", self.up(c4).specs()));
        specs.extend(nest("bu.down3", self.down(c3).specs()));
        specs.extend(nest("bu.down4", self.down(c4).specs()));
        for m in self.merges() {
            let fan = m.moved + m.lateral;
            let out = m.lateral;
            specs.push(ParamSpec::new(
                join(m.name, "weight"),
                [out, fan, 1, 1],
                Fill::Eye { offset: m.moved },
                Fill::Normal { mean: 0.0, std: fan_in_std(fan) },
            ));
            specs.push(ParamSpec::new(
                join(m.name, "bias"),
                [1, out, 1, 1],
                Fill::Zeros,
                Fill::Normal { mean: 0.0, std: 0.1 },
            ));
        }
        specs.extend(nest("td.fuse4", self.fuse(c4).specs()));
        specs.extend(nest("td.fuse3", self.fuse(c3).specs()));
        specs.extend(nest("bu.fuse4", self.fuse(c4).specs()));
        specs.extend(nest("bu.fuse5", self.fuse(c5).specs()));
        specs
    }

    /// Checks channel counts, batch agreement and the exact 2× size ratio
    /// between consecutive levels.
    pub fn check_levels(&self, shapes: &[Shape]) -> Result<()> {
        if shapes.len() != 3 {
            return Err(Error::dim("ca2neck", format!("expected 3 levels, got {}", shapes.len())));
        }
        for (k, (s, &c)) in shapes.iter().zip(&self.channels).enumerate() {
            if s[1] != c {
                return Err(Error::dim("ca2neck", format!("level {k} has shape {s:?}, expected {c} channels")));
            }
            if s[0] != shapes[0][0] {
                return Err(Error::dim("ca2neck", "levels disagree on batch size"));
            }
        }
        for k in 0..2 {
            let (fine, coarse) = (shapes[k], shapes[k + 1]);
            if fine[2] != 2 * coarse[2] || fine[3] != 2 * coarse[3] {
                return Err(Error::dim(
                    "ca2neck",
                    format!("level {k} {fine:?} is not exactly twice level {} {coarse:?}", k + 1),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ca2NeckParams<T: Element = f64> {
    config: Ca2NeckConfig,
    block: ParamBlock<T>,
}

impl<T: Element> Ca2NeckParams<T> {
    pub fn new(config: Ca2NeckConfig, source: Source, seed: u64) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::generate(config.specs(), source, seed)?;
        Ok(Ca2NeckParams { config, block })
    }

    pub fn from_store(config: Ca2NeckConfig, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        config.validate()?;
        let block = ParamBlock::from_store(config.specs(), store, prefix)?;
        Ok(Ca2NeckParams { config, block })
    }

    pub fn config(&self) -> &Ca2NeckConfig {
        &self.config
    }

    pub fn block(&self) -> &ParamBlock<T> {
        &self.block
    }

    pub fn block_mut(&mut self) -> &mut ParamBlock<T> {
        &mut self.block
    }

    pub fn dysample(&self, name: &str, c: usize) -> Result<DysampleParams<T>> {
        DysampleParams::from_store(self.config.up(c), self.block.store(), name)
    }

    pub fn ldconv(&self, name: &str, c: usize) -> Result<LdconvParams<T>> {
        LdconvParams::from_store(self.config.down(c), self.block.store(), name)
    }

    pub fn msgrb(&self, name: &str, c: usize) -> Result<MsgrbParams<T>> {
        MsgrbParams::from_store(self.config.fuse(c), self.block.store(), name)
    }

    pub fn build(&self, tape: &mut Tape<T>, levels: [Var; 3], prefix: &str) -> Result<[Var; 3]> {
        let bound = self.block.register(tape, prefix)?;
        build(tape, levels, &self.config, &bound, prefix)
    }
}

/// Records the neck; parameters must already be bound.
pub fn build<T: Element>(
    tape: &mut Tape<T>,
    levels: [Var; 3],
    config: &Ca2NeckConfig,
    bound: &Bound,
    prefix: &str,
) -> Result<[Var; 3]> {
    let shapes = levels.iter().map(|&v| tape.shape(v)).collect::<Result<Vec<_>>>()?;
    config.check_levels(&shapes)?;
    let [c3, c4, c5] = config.channels;
    let [p3, p4, p5] = levels;
    let p = |name: &str| join(prefix, name);

    let merge = |tape: &mut Tape<T>, name: &str, moved: Var, lateral: Var| -> Result<Var> {
        let cat = tape.concat_channels(&[moved, lateral])?;
        tape.conv2d(
            cat,
            bound.get(&join(&p(name), "weight"))?,
            Some(bound.get(&join(&p(name), "bias"))?),
            1,
            0,
        )
    };

    let up5 = dysample::build(tape, p5, &config.up(c5), bound, &p("td.up5"))?;
    let m4 = merge(tape, "td.merge4", up5, p4)?;
    let t4 = msgrb::build(tape, m4, &config.fuse(c4), bound, &p("td.fuse4"))?;

    let up4 = dysample::build(tape, t4, &config.up(c4), bound, &p("td.up4"))?;
    let m3 = merge(tape, "td.merge3", up4, p3)?;
    let o3 = msgrb::build(tape, m3, &config.fuse(c3), bound, &p("td.fuse3"))?;

    let down3 = ldconv::build(tape, o3, &config.down(c3), bound, &p("bu.down3"))?;
    let m4b = merge(tape, "bu.merge4", down3, t4)?;
    let o4 = msgrb::build(tape, m4b, &config.fuse(c4), bound, &p("bu.fuse4"))?;

    let down4 = ldconv::build(tape, o4, &config.down(c4), bound, &p("bu.down4"))?;
    let m5 = merge(tape, "bu.merge5", down4, p5)?;
    let o5 = msgrb::build(tape, m5, &config.fuse(c5), bound, &p("bu.fuse5"))?;
    Ok([o3, o4, o5])
}

/// Refines a `[stride 8, 16, 32]` pyramid; output shapes equal input shapes.
pub fn ca2neck_forward<T: Element>(features: &[Tensor<T>], p: &Ca2NeckParams<T>) -> Result<Vec<Tensor<T>>> {
    let shapes: Vec<Shape> = features.iter().map(|f| f.shape()).collect();
    p.config.check_levels(&shapes)?;
    let [c3, c4, c5] = p.config.channels;
    let (p3, p4, p5) = (&features[0], &features[1], &features[2]);
    let b = &p.block;
    let merge = |name: &str, moved: &Tensor<T>, lateral: &Tensor<T>| -> Result<Tensor<T>> {
        conv::conv2d(
            &ops::concat_channels(&[moved, lateral])?,
            b.get(&join(name, "weight"))?,
            Some(b.get(&join(name, "bias"))?),
            1,
            0,
        )
    };

    let up5 = dysample::dysample_forward(p5, &p.dysample("td.up5", c5)?)?;
    let t4 = msgrb::msgrb_forward(&merge("td.merge4", &up5, p4)?, &p.msgrb("td.fuse4", c4)?)?;
    let up4 = dysample::dysample_forward(&t4, &p.dysample("td.up4", c4)?)?;
    let o3 = msgrb::msgrb_forward(&merge("td.merge3", &up4, p3)?, &p.msgrb("td.fuse3", c3)?)?;
    let down3 = ldconv::ldconv_forward(&o3, &p.ldconv("bu.down3", c3)?)?;
    let o4 = msgrb::msgrb_forward(&merge("bu.merge4", &down3, &t4)?, &p.msgrb("bu.fuse4", c4)?)?;
    let down4 = ldconv::ldconv_forward(&o4, &p.ldconv("bu.down4", c4)?)?;
    let o5 = msgrb::msgrb_forward(&merge("bu.merge5", &down4, p5)?, &p.msgrb("bu.fuse5", c5)?)?;
    Ok(vec![o3, o4, o5])
}
