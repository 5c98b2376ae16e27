//! The four subcommands. Each returns the lines to print on standard output
//! and whether the run passed; errors carry their exit code.

use std::path::Path;
use std::time::Instant;

use sep_core::autodiff::{gradcheck as certify, GradcheckConfig, Tape, Var};
use sep_core::io;
use sep_core::json::JsonObject;
use sep_core::rng::{mix_seed, seeded};
use sep_core::{props as suite, DType, Element, ParamStore, Shape, Tensor};

use crate::chain::{forward as run_chain, record, run_stage, Plan};
use crate::config::GraphConfig;
use crate::error::{CliError, Result};

/// Standard output of a command and its verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub pass: bool,
}

/// File names of pyramid levels inside a tensor directory.
pub fn level_file(level: usize) -> String {
    format!("level{level}.sept")
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<GraphConfig> {
    let mut cfg = GraphConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn declared_inputs(cfg: &GraphConfig, command: &str) -> Result<Vec<Shape>> {
    cfg.inputs
        .clone()
        .ok_or_else(|| CliError::config(format!("{command} needs `input = NxCxHxW` in [chain]")))
}

fn read_tensor<T: Element>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let t = match io::peek_dtype(&bytes).map_err(|e| CliError::at(path, e))? {
        DType::F32 => io::tensor_from_bytes::<f32>(&bytes).and_then(|t| t.cast()),
        DType::F64 => io::tensor_from_bytes::<f64>(&bytes).and_then(|t| t.cast()),
    };
    t.map_err(|e| CliError::at(path, e))
}

/// A file, or a directory of `level{i}.sept` files for pyramids.
fn read_inputs<T: Element>(path: &Path) -> Result<Vec<Tensor<T>>> {
    if !path.exists() {
        return Err(CliError::config(format!("{}: input not found", path.display())));
    }
    if !path.is_dir() {
        return Ok(vec![read_tensor(path)?]);
    }
    let mut levels = Vec::new();
    while path.join(level_file(levels.len())).is_file() {
        levels.push(read_tensor(&path.join(level_file(levels.len())))?);
    }
    if levels.is_empty() {
        return Err(CliError::config(format!("{}: directory holds no {}", path.display(), level_file(0))));
    }
    Ok(levels)
}

fn write_outputs<T: Element>(path: &Path, ys: &[Tensor<T>]) -> Result<()> {
    if let [y] = ys {
        return io::save_tensor(path, y).map_err(|e| CliError::at(path, e));
    }
    std::fs::create_dir_all(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    for (i, y) in ys.iter().enumerate() {
        let file = path.join(level_file(i));
        io::save_tensor(&file, y).map_err(|e| CliError::at(&file, e))?;
    }
    Ok(())
}

/// `{shape, min, max, mean, l2, wall_ms, seed}`.
pub fn stats<T: Element>(y: &Tensor<T>, wall_ms: f64, seed: u64) -> String {
    let data = y.data();
    let sum: f64 = data.iter().map(|v| v.as_f64()).sum();
    let l2 = data.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    JsonObject::new()
        .ints("shape", &y.shape())
        .num("min", y.min().as_f64())
        .num("max", y.max().as_f64())
        .num("mean", sum / data.len() as f64)
        .num("l2", l2)
        .num("wall_ms", wall_ms)
        .int("seed", seed)
        .finish()
}

fn forward_as<T: Element>(cfg: &GraphConfig, input: &Path, output: &Path) -> Result<Report> {
    let xs = read_inputs::<T>(input)?;
    let shapes: Vec<Shape> = xs.iter().map(|x| x.shape()).collect();
    if let Some(declared) = &cfg.inputs {
        if declared != &shapes {
            return Err(CliError::Shape(format!(
                "{}: input shapes {shapes:?} differ from declared {declared:?}",
                input.display()
            )));
        }
    }
    let plan = Plan::new(cfg, &shapes, false)?;
    let store = plan.materialize::<T>()?;
    let start = Instant::now();
    let ys = run_chain(&plan, &store, xs)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    write_outputs(output, &ys)?;
    Ok(Report { lines: ys.iter().map(|y| stats(y, wall_ms, cfg.seed)).collect(), pass: true })
}

/// Runs the chain on the tensor (or pyramid directory) at `input` and writes
/// the result to `output`.
pub fn forward(config: &Path, input: &Path, output: &Path, seed: Option<u64>) -> Result<Report> {
    let cfg = load_config(config, seed)?;
    match cfg.dtype {
        DType::F32 => forward_as::<f32>(&cfg, input, output),
        DType::F64 => forward_as::<f64>(&cfg, input, output),
    }
}

/// Runs the registered properties as JSON lines; fails if any property does.
pub fn props(filter: Option<&str>, seed: u64) -> Result<Report> {
    let outcomes = suite::run(filter, seed)?;
    Ok(Report {
        pass: outcomes.iter().all(|o| o.pass),
        lines: outcomes.iter().map(|o| o.to_json()).collect(),
    })
}

fn seeded_levels<T: Element>(shapes: &[Shape], seed: u64, stream: u64) -> Result<Vec<Tensor<T>>> {
    shapes
        .iter()
        .enumerate()
        .map(|(l, &s)| {
            let mut rng = seeded(mix_seed(seed, stream + l as u64));
            Ok(Tensor::<T>::randn(s, 0.0, 1.0, &mut rng)?)
        })
        .collect()
}

/// Name under which input level `l` is checked alongside the parameters.
pub fn input_name(l: usize) -> String {
    format!("input.level{l}")
}

/// Certifies every chain parameter and input on a seeded `N(0,1)` input,
/// with a seeded random projection of the outputs as the loss.
pub fn gradcheck(config: &Path, seed: Option<u64>) -> Result<Report> {
    let cfg = load_config(config, seed)?;
    let shapes = declared_inputs(&cfg, "gradcheck")?;
    let plan = Plan::new(&cfg, &shapes, false)?;
    let mut params: ParamStore<f64> = plan.materialize()?;
    for (l, x) in seeded_levels::<f64>(&shapes, cfg.seed, 1000)?.into_iter().enumerate() {
        params.insert(input_name(l), x);
    }
    let projections = seeded_levels::<f64>(plan.outputs(), cfg.seed, 2000)?;
    let loss = |tape: &mut Tape<f64>, p: &ParamStore<f64>| -> sep_core::Result<Var> {
        let xs = (0..shapes.len())
            .map(|l| tape.param(input_name(l), p.get(&input_name(l))?.clone()))
            .collect::<sep_core::Result<Vec<_>>>()?;
        let ys = record(&plan, p, tape, xs)?;
        let mut total: Option<Var> = None;
        for (y, r) in ys.into_iter().zip(&projections) {
            let r = tape.input(r.clone());
            let prod = tape.mul(y, r)?;
            let s = tape.sum(prod)?;
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        Ok(total.expect("chains produce at least one output"))
    };
    let gc = GradcheckConfig { eps: 1e-5, tol: 1e-4, max_coords: 512, seed: cfg.seed };
    let reports = certify(loss, &params, &gc)?;
    let pass = reports.iter().all(|r| r.pass);
    let mut lines: Vec<String> = reports.iter().map(|r| r.to_json()).collect();
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    lines.push(
        JsonObject::new()
            .int("params", reports.len() as u64)
            .num("max_rel_err", worst)
            .bool("pass", pass)
            .int("seed", cfg.seed)
            .finish(),
    );
    Ok(Report { lines, pass })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn shape_json(shapes: &[Shape]) -> String {
    let one = |s: &Shape| format!("[{}]", s.map(|d| d.to_string()).join(","));
    match shapes {
        [s] => one(s),
        _ => format!("[{}]", shapes.iter().map(one).collect::<Vec<_>>().join(",")),
    }
}

fn bench_as<T: Element>(cfg: &GraphConfig, repeats: usize) -> Result<Report> {
    let shapes = declared_inputs(cfg, "bench")?;
    let plan = Plan::new(cfg, &shapes, true)?;
    let store = plan.materialize::<T>()?;
    let mut xs = seeded_levels::<T>(&shapes, cfg.seed, 1000)?;
    let mut records = Vec::with_capacity(plan.stages.len());
    for stage in &plan.stages {
        let warm = run_stage(stage, &store, &xs)?;
        let mut times = (0..repeats)
            .map(|_| {
                let start = Instant::now();
                run_stage(stage, &store, &xs)?;
                Ok(start.elapsed().as_secs_f64() * 1e3)
            })
            .collect::<Result<Vec<f64>>>()?;
        times.sort_by(f64::total_cmp);
        records.push(
            JsonObject::new()
                .str("module", stage.kind.name())
                .num("median_ms", median(&times))
                .num("min_ms", times[0])
                .raw("input_shape", &shape_json(&stage.inputs))
                .finish(),
        );
        xs = warm;
    }
    let mut lines = vec!["[".to_string()];
    let last = records.len() - 1;
    for (i, r) in records.into_iter().enumerate() {
        lines.push(if i < last { format!("  {r},") } else { format!("  {r}") });
    }
    lines.push("]".to_string());
    Ok(Report { lines, pass: true })
}

/// Times every stage after one warmup, over `repeats ≥ 3` runs.
pub fn bench(config: &Path, repeats: usize, seed: Option<u64>) -> Result<Report> {
    if repeats < 3 {
        return Err(CliError::config(format!("--repeats must be at least 3, got {repeats}")));
    }
    let cfg = load_config(config, seed)?;
    match cfg.dtype {
        DType::F32 => bench_as::<f32>(&cfg, repeats),
        DType::F64 => bench_as::<f64>(&cfg, repeats),
    }
}
