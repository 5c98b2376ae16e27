//! Line-oriented graph configuration.
//!
//! ```text
//! # comment
//! [chain]
//! seed  = 7
//! dtype = f64                  # f32 | f64
//! input = 1x8x16x16            # levels separated by `;`
//!
//! [msgrb]
//! kernels = 3,5,7
//! params  = init               # init | random | zeros | file:PATH
//! ```
//!
//! Module sections run in file order. The `[chain]` section is optional and
//! must come first when present.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sep_core::neck::AnchorMode;
use sep_core::{DType, Shape};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Fddem,
    Msgrb,
    Ldconv,
    Dysample,
    Ca2neck,
    /// Timing-only: radix-2 transform.
    Fft2,
    /// Timing-only: direct DFT.
    Dft2,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Fddem => "fddem",
            Kind::Msgrb => "msgrb",
            Kind::Ldconv => "ldconv",
            Kind::Dysample => "dysample",
            Kind::Ca2neck => "ca2neck",
            Kind::Fft2 => "fft2",
            Kind::Dft2 => "dft2",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fddem" => Kind::Fddem,
            "msgrb" => Kind::Msgrb,
            "ldconv" => Kind::Ldconv,
            "dysample" => Kind::Dysample,
            "ca2neck" => Kind::Ca2neck,
            "fft2" => Kind::Fft2,
            "dft2" => Kind::Dft2,
            _ => return None,
        })
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Kind::Fddem => &["params", "branches", "reduction"],
            Kind::Msgrb => &["params", "kernels"],
            Kind::Ldconv => &["params", "out_channels", "points", "stride", "anchor"],
            Kind::Dysample => &["params", "scale", "groups", "scope"],
            Kind::Ca2neck => &["params", "points", "groups", "scope", "kernels"],
            Kind::Fft2 | Kind::Dft2 => &[],
        }
    }

    /// Modules that only `bench` accepts.
    pub fn timing_only(self) -> bool {
        matches!(self, Kind::Fft2 | Kind::Dft2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamSource {
    Init,
    Random,
    Zeros,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleSpec {
    pub kind: Kind,
    /// 1-based line of the section header.
    pub line: usize,
    pub source: ParamSource,
    values: BTreeMap<String, (String, usize)>,
}

impl ModuleSpec {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.values.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn bad(&self, key: &str, line: usize, want: &str, got: &str) -> CliError {
        CliError::config(format!(
            "line {line}: [{}] {key} must be {want}, got `{got}`",
            self.kind.name()
        ))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, l)) => v.parse().map_err(|_| self.bad(key, l, "a non-negative integer", v)),
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key).map(|_| self.usize_or(key, 0)).transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, l)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.bad(key, l, "a finite number", v)),
        }
    }

    pub fn list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some((v, l)) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| self.bad(key, l, "a comma-separated integer list", v)),
        }
    }

    pub fn anchor(&self) -> Result<AnchorMode> {
        match self.raw("anchor") {
            None => Ok(AnchorMode::default()),
            Some(("centered", _)) => Ok(AnchorMode::Centered),
            Some(("corner", _)) => Ok(AnchorMode::Corner),
            Some((v, l)) => Err(self.bad("anchor", l, "`centered` or `corner`", v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub seed: u64,
    pub dtype: DType,
    /// Declared input shapes; required by `gradcheck` and `bench`.
    pub inputs: Option<Vec<Shape>>,
    pub modules: Vec<ModuleSpec>,
}

fn parse_shape(s: &str) -> Option<Shape> {
    let dims: Vec<usize> = s.split('x').map(|d| d.trim().parse().ok()).collect::<Option<_>>()?;
    let shape: Shape = dims.try_into().ok()?;
    shape.iter().all(|&d| d > 0).then_some(shape)
}

fn parse_source(v: &str, base: &Path) -> Option<ParamSource> {
    Some(match v {
        "init" => ParamSource::Init,
        "random" => ParamSource::Random,
        "zeros" => ParamSource::Zeros,
        _ => {
            let path = v.strip_prefix("file:")?.trim();
            if path.is_empty() {
                return None;
            }
            ParamSource::File(base.join(path))
        }
    })
}

impl GraphConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses `text`; relative `file:` paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = GraphConfig { seed: 0, dtype: DType::F64, inputs: None, modules: Vec::new() };
        let mut in_chain = false;
        let mut seen_chain = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if name == "chain" {
                    if seen_chain || !cfg.modules.is_empty() {
                        return Err(CliError::config(format!(
                            "line {line}: [chain] must appear once, before any module"
                        )));
                    }
                    seen_chain = true;
                    in_chain = true;
                    continue;
                }
                let kind = Kind::parse(name)
                    .ok_or_else(|| CliError::config(format!("line {line}: unknown module `{name}`")))?;
                in_chain = false;
                cfg.modules.push(ModuleSpec {
                    kind,
                    line,
                    source: ParamSource::Init,
                    values: BTreeMap::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| CliError::config(format!("line {line}: expected `key = value`")))?;
            if in_chain {
                match key {
                    "seed" => {
                        cfg.seed = value.parse().map_err(|_| {
                            CliError::config(format!("line {line}: seed must be a u64, got `{value}`"))
                        })?
                    }
                    "dtype" => {
                        cfg.dtype = match value {
                            "f32" => DType::F32,
                            "f64" => DType::F64,
                            _ => {
                                return Err(CliError::config(format!(
                                    "line {line}: dtype must be f32 or f64, got `{value}`"
                                )))
                            }
                        }
                    }
                    "input" => {
                        let shapes = value
                            .split(';')
                            .map(|s| parse_shape(s.trim()))
                            .collect::<Option<Vec<_>>>()
                            .ok_or_else(|| {
                                CliError::config(format!("line {line}: input must look like 1x8x16x16, got `{value}`"))
                            })?;
                        cfg.inputs = Some(shapes);
                    }
                    _ => return Err(CliError::config(format!("line {line}: unknown [chain] key `{key}`"))),
                }
                continue;
            }
            let module = cfg
                .modules
                .last_mut()
                .ok_or_else(|| CliError::config(format!("line {line}: `{key}` outside any section")))?;
            if !module.kind.keys().contains(&key) {
                return Err(CliError::config(format!(
                    "line {line}: unknown key `{key}` for [{}]",
                    module.kind.name()
                )));
            }
            if module.values.contains_key(key) {
                return Err(CliError::config(format!("line {line}: duplicate key `{key}`")));
            }
            if key == "params" {
                module.source = parse_source(value, base).ok_or_else(|| {
                    CliError::config(format!(
                        "line {line}: params must be init, random, zeros or file:PATH, got `{value}`"
                    ))
                })?;
            }
            module.values.insert(key.to_string(), (value.to_string(), line));
        }
        if cfg.modules.is_empty() {
            return Err(CliError::config("configuration declares no modules"));
        }
        Ok(cfg)
    }
}
