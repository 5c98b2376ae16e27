//! Validated module chains: shape planning, parameter materialization and
//! execution (plain or recorded on a tape).

use sep_core::autodiff::{Tape, Var};
use sep_core::fddem::{fddem_forward, FddemConfig, FddemParams};
use sep_core::io;
use sep_core::msgrb::{msgrb_forward, MsgrbConfig, MsgrbParams};
use sep_core::neck::{
    ca2neck_forward, dysample_forward, ldconv_forward, Ca2NeckConfig, Ca2NeckParams, DysampleConfig,
    DysampleParams, LdconvConfig, LdconvParams,
};
use sep_core::rng::mix_seed;
use sep_core::spectral::{fft2_with, FftPath};
use sep_core::{Element, ParamStore, Shape, Source, Tensor};

use crate::config::{GraphConfig, Kind, ModuleSpec, ParamSource};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StageConfig {
    Fddem(FddemConfig),
    Msgrb(MsgrbConfig),
    Ldconv(LdconvConfig),
    Dysample(DysampleConfig),
    Ca2neck(Ca2NeckConfig),
    Transform(FftPath),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Parameter prefix, `m{index}`.
    pub name: String,
    pub kind: Kind,
    pub config: StageConfig,
    pub source: ParamSource,
    pub inputs: Vec<Shape>,
    pub outputs: Vec<Shape>,
}

/// Shape-checked stages for a concrete input.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub seed: u64,
    pub stages: Vec<Stage>,
}

fn single(kind: Kind, shapes: &[Shape]) -> Result<Shape> {
    match shapes {
        [s] => Ok(*s),
        _ => Err(CliError::Shape(format!(
            "[{}] takes one tensor, got {} levels",
            kind.name(),
            shapes.len()
        ))),
    }
}

fn stage_config(m: &ModuleSpec, shapes: &[Shape]) -> Result<(StageConfig, Vec<Shape>)> {
    Ok(match m.kind {
        Kind::Ca2neck => {
            if shapes.len() != 3 {
                return Err(CliError::Shape(format!("[ca2neck] takes 3 levels, got {}", shapes.len())));
            }
            let mut c = Ca2NeckConfig::new([shapes[0][1], shapes[1][1], shapes[2][1]]);
            c.points = m.usize_or("points", c.points)?;
            c.groups = m.usize_or("groups", c.groups)?;
            c.scope = m.f64_or("scope", c.scope)?;
            c.kernels = m.list_or("kernels", &c.kernels)?;
            c.validate()?;
            c.check_levels(shapes)?;
            (StageConfig::Ca2neck(c), shapes.to_vec())
        }
        kind => {
            let s @ [n, ch, h, w] = single(kind, shapes)?;
            match kind {
                Kind::Fddem => {
                    let mut c = FddemConfig::new(ch, h, w);
                    c.branches = m.usize_or("branches", c.branches)?;
                    c.reduction = m.usize_or("reduction", c.reduction)?;
                    c.validate()?;
                    (StageConfig::Fddem(c), vec![s])
                }
                Kind::Msgrb => {
                    let c = MsgrbConfig { channels: ch, kernels: m.list_or("kernels", &[3, 5, 7])? };
                    c.validate()?;
                    (StageConfig::Msgrb(c), vec![s])
                }
                Kind::Ldconv => {
                    let mut c = LdconvConfig::new(
                        ch,
                        m.usize_or("out_channels", ch)?,
                        m.usize_or("points", 5)?,
                        m.usize_or("stride", 1)?,
                    );
                    c.anchor = m.anchor()?;
                    c.validate()?;
                    let (ho, wo) = c.out_hw(h, w);
                    let out = [n, c.out_channels, ho, wo];
                    (StageConfig::Ldconv(c), vec![out])
                }
                Kind::Dysample => {
                    let mut c = DysampleConfig::new(ch, m.usize_or("scale", 2)?);
                    c.groups = m.usize_or("groups", c.groups)?;
                    c.scope = m.f64_or("scope", c.scope)?;
                    c.validate()?;
                    let out = [n, ch, c.scale * h, c.scale * w];
                    (StageConfig::Dysample(c), vec![out])
                }
                Kind::Fft2 => (StageConfig::Transform(FftPath::Auto), vec![s]),
                Kind::Dft2 => (StageConfig::Transform(FftPath::Naive), vec![s]),
                Kind::Ca2neck => unreachable!("handled above"),
            }
        }
    })
}

impl Plan {
    /// Checks every stage against the running shapes. Timing-only modules
    /// are rejected unless `timing` is set.
    pub fn new(cfg: &GraphConfig, inputs: &[Shape], timing: bool) -> Result<Self> {
        let mut shapes = inputs.to_vec();
        let mut stages = Vec::with_capacity(cfg.modules.len());
        for (i, m) in cfg.modules.iter().enumerate() {
            if m.kind.timing_only() && !timing {
                return Err(CliError::config(format!(
                    "line {}: [{}] is only valid for bench",
                    m.line,
                    m.kind.name()
                )));
            }
            let (config, outputs) = stage_config(m, &shapes).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("line {}: {msg}", m.line)),
                CliError::Shape(msg) => CliError::Shape(format!("[{}] at line {}: {msg}", m.kind.name(), m.line)),
                other => other,
            })?;
            stages.push(Stage {
                name: format!("m{i}"),
                kind: m.kind,
                config,
                source: m.source.clone(),
                inputs: shapes.clone(),
                outputs: outputs.clone(),
            });
            shapes = outputs;
        }
        Ok(Plan { seed: cfg.seed, stages })
    }

    pub fn outputs(&self) -> &[Shape] {
        &self.stages.last().expect("plans are non-empty").outputs
    }

    /// Parameters of every stage, prefixed with the stage name. Random
    /// stages draw from `mix_seed(seed, stage index)`.
    pub fn materialize<T: Element>(&self) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for (i, stage) in self.stages.iter().enumerate() {
            store.extend(stage_params(stage, mix_seed(self.seed, i as u64))?);
        }
        Ok(store)
    }
}

macro_rules! with_params {
    ($stage:expr, $params:ident, $cfg:ident => $body:expr, transform => $t:expr) => {
        match &$stage.config {
            StageConfig::Fddem($cfg) => {
                type $params<T> = FddemParams<T>;
                $body
            }
            StageConfig::Msgrb($cfg) => {
                type $params<T> = MsgrbParams<T>;
                $body
            }
            StageConfig::Ldconv($cfg) => {
                type $params<T> = LdconvParams<T>;
                $body
            }
            StageConfig::Dysample($cfg) => {
                type $params<T> = DysampleParams<T>;
                $body
            }
            StageConfig::Ca2neck($cfg) => {
                type $params<T> = Ca2NeckParams<T>;
                $body
            }
            StageConfig::Transform(_) => $t,
        }
    };
}

fn stage_params<T: Element>(stage: &Stage, seed: u64) -> Result<ParamStore<T>> {
    let file = match &stage.source {
        ParamSource::File(path) => Some((path, io::load_params::<T>(path).map_err(|e| CliError::at(path, e))?)),
        _ => None,
    };
    let source = match stage.source {
        ParamSource::Random => Source::Random,
        ParamSource::Zeros => Source::Zeros,
        _ => Source::Init,
    };
    with_params!(stage, P, c => {
        let p = match &file {
            // A file that does not fit the module is a bad input, not a shape error.
            Some((path, store)) => P::<T>::from_store(c.clone(), store, "")
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
            None => P::<T>::new(c.clone(), source, seed)?,
        };
        Ok(p.block().to_store(&stage.name))
    }, transform => Ok(ParamStore::new()))
}

/// Runs one stage on concrete tensors.
pub fn run_stage<T: Element>(stage: &Stage, store: &ParamStore<T>, xs: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
    let shapes: Vec<Shape> = xs.iter().map(|x| x.shape()).collect();
    if shapes != stage.inputs {
        return Err(CliError::Shape(format!(
            "[{}] planned for {:?}, got {shapes:?}",
            stage.kind.name(),
            stage.inputs
        )));
    }
    let name = &stage.name;
    Ok(match &stage.config {
        StageConfig::Fddem(c) => vec![fddem_forward(&xs[0], &FddemParams::from_store(c.clone(), store, name)?)?],
        StageConfig::Msgrb(c) => vec![msgrb_forward(&xs[0], &MsgrbParams::from_store(c.clone(), store, name)?)?],
        StageConfig::Ldconv(c) => vec![ldconv_forward(&xs[0], &LdconvParams::from_store(c.clone(), store, name)?)?],
        StageConfig::Dysample(c) => {
            vec![dysample_forward(&xs[0], &DysampleParams::from_store(c.clone(), store, name)?)?]
        }
        StageConfig::Ca2neck(c) => ca2neck_forward(xs, &Ca2NeckParams::from_store(c.clone(), store, name)?)?,
        // Timing-only: the spectrum is computed and discarded.
        StageConfig::Transform(path) => {
            fft2_with(&xs[0], *path)?;
            xs.to_vec()
        }
    })
}

pub fn forward<T: Element>(plan: &Plan, store: &ParamStore<T>, xs: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
    plan.stages.iter().try_fold(xs, |xs, stage| run_stage(stage, store, &xs))
}

/// Records the chain on `tape`, registering parameters from `store`.
pub fn record<T: Element>(
    plan: &Plan,
    store: &ParamStore<T>,
    tape: &mut Tape<T>,
    xs: Vec<Var>,
) -> sep_core::Result<Vec<Var>> {
    let mut vars = xs;
    for stage in &plan.stages {
        let name = &stage.name;
        vars = with_params!(stage, P, c => {
            P::<T>::from_store(c.clone(), store, name)?.record(tape, &vars, name)?
        }, transform => {
            return Err(sep_core::Error::Argument { op: stage.kind.name(), detail: "timing-only modules cannot be differentiated".into() })
        });
    }
    Ok(vars)
}

/// Uniform tape entry point for single- and multi-level blocks.
trait Record<T: Element> {
    fn record(&self, tape: &mut Tape<T>, xs: &[Var], prefix: &str) -> sep_core::Result<Vec<Var>>;
}

macro_rules! record_single {
    ($($p:ident),*) => {$(
        impl<T: Element> Record<T> for $p<T> {
            fn record(&self, tape: &mut Tape<T>, xs: &[Var], prefix: &str) -> sep_core::Result<Vec<Var>> {
                Ok(vec![self.build(tape, xs[0], prefix)?])
            }
        }
    )*};
}

record_single!(FddemParams, MsgrbParams, LdconvParams, DysampleParams);

impl<T: Element> Record<T> for Ca2NeckParams<T> {
    fn record(&self, tape: &mut Tape<T>, xs: &[Var], prefix: &str) -> sep_core::Result<Vec<Var>> {
        Ok(self.build(tape, [xs[0], xs[1], xs[2]], prefix)?.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    fn plan(text: &str, inputs: &[Shape]) -> Result<Plan> {
        Plan::new(&GraphConfig::parse(text, Path::new(".")).unwrap(), inputs, false)
    }

    #[test]
    fn shapes_propagate_through_stages() {
        let p = plan("[ldconv]\nout_channels = 6\nstride = 2\n[dysample]\nscale = 2\n[fddem]\n", &[[2, 4, 9, 7]]).unwrap();
        let outs: Vec<Shape> = p.stages.iter().map(|s| s.outputs[0]).collect();
        assert_eq!(outs, [[2, 6, 5, 4], [2, 6, 10, 8], [2, 6, 10, 8]]);
        assert_eq!(p.stages[2].config, StageConfig::Fddem(FddemConfig::new(6, 10, 8)));
    }

    #[test]
    fn pyramid_and_single_tensor_stages_do_not_mix() {
        let levels = [[1, 4, 8, 8], [1, 8, 4, 4], [1, 16, 2, 2]];
        assert!(plan("[ca2neck]\n[ca2neck]\n", &levels).is_ok());
        assert!(matches!(plan("[ca2neck]\n[msgrb]\n", &levels), Err(CliError::Shape(_))));
        assert!(matches!(plan("[ca2neck]\n", &levels[..1]), Err(CliError::Shape(_))));
        assert!(matches!(plan("[fft2]\n", &levels[..1]), Err(CliError::Config(_))));
    }

    #[test]
    fn stages_draw_independent_prefixed_parameters() {
        let p = plan("[chain]\nseed = 3\n[msgrb]\nparams = random\n[msgrb]\nparams = random\n", &[[1, 4, 5, 5]]).unwrap();
        let store = p.materialize::<f64>().unwrap();
        let a = store.get("m0.expand.weight").unwrap();
        let b = store.get("m1.expand.weight").unwrap();
        assert_ne!(a, b);
        assert_eq!(store, p.materialize::<f64>().unwrap());
        let x = Tensor::<f64>::ones([1, 4, 5, 5]).unwrap();
        let y = forward(&p, &store, vec![x.clone()]).unwrap();
        let mut tape = Tape::new();
        let v = tape.input(x);
        let out = record(&p, &store, &mut tape, vec![v]).unwrap();
        assert!(tape.real(out[0]).unwrap().max_abs_diff(&y[0]).unwrap() <= 1e-12);
    }
}
