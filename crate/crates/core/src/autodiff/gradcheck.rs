//! Central-difference certification of tape gradients.

use rand::seq::index::sample;
use rayon::prelude::*;

use super::tape::{backward, Tape, Var};
use crate::error::{Error, Result};
use crate::json::JsonObject;
use crate::params::ParamStore;
use crate::rng::{mix_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    /// Central-difference step, in `[1e-7, 1e-3]`.
    pub eps: f64,
    /// Pass threshold on `max_rel_err`.
    pub tol: f64,
    /// Tensors with more elements than this are checked on a random subset
    /// of this many coordinates (at least 64).
    pub max_coords: usize,
    /// Seed for coordinate subsampling.
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { eps: 1e-5, tol: 1e-4, max_coords: 512, seed: 0 }
    }
}

/// Analytic-versus-numeric agreement for one named parameter.
///
/// `max_rel_err` is `max_abs_err / max(‖a‖∞, ‖n‖∞, 1e-12)` over the checked
/// coordinates, with `a` the tape gradient and `n` the central difference.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub param: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub cosine: f64,
    pub pass: bool,
    pub checked: usize,
    pub numel: usize,
}

impl GradReport {
    /// `{param, max_abs_err, max_rel_err, cosine, pass}`.
    pub fn to_json(&self) -> String {
        JsonObject::new()
            .str("param", &self.param)
            .num("max_abs_err", self.max_abs_err)
            .num("max_rel_err", self.max_rel_err)
            .num("cosine", self.cosine)
            .bool("pass", self.pass)
            .finish()
    }

    /// Compares analytic and numeric gradient samples.
    pub fn compare(param: &str, analytic: &[f64], numeric: &[f64], numel: usize, tol: f64) -> Self {
        let max_abs_err = analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let denom = inf(analytic).max(inf(numeric)).max(1e-12);
        let max_rel_err = max_abs_err / denom;
        let dot: f64 = analytic.iter().zip(numeric).map(|(a, n)| a * n).sum();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let cosine = if na == 0.0 && nn == 0.0 { 1.0 } else { dot / (na * nn).max(1e-300) };
        GradReport {
            param: param.to_string(),
            max_abs_err,
            max_rel_err,
            cosine,
            pass: max_rel_err <= tol,
            checked: analytic.len(),
            numel,
        }
    }
}

fn scalar_loss<F>(f: &F, params: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, params)?;
    let t = tape.real(out)?;
    if t.numel() != 1 {
        return Err(Error::dim("gradcheck", format!("loss must be scalar, got {:?}", t.shape())));
    }
    let v = t.data()[0];
    if !v.is_finite() {
        return Err(Error::numeric("gradcheck", "loss is not finite"));
    }
    Ok(v)
}

/// Certifies the tape gradient of every parameter in `params`.
///
/// `f` records the computation on a fresh tape, registering each parameter
/// it uses under its store name, and returns a scalar (`[1,1,1,1]`) node.
/// Tolerance failures are reported through [`GradReport::pass`]; errors are
/// returned only for invalid configurations or non-finite losses.
pub fn gradcheck<F>(f: F, params: &ParamStore<f64>, cfg: &GradcheckConfig) -> Result<Vec<GradReport>>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var> + Sync,
{
    if !(1e-7..=1e-3).contains(&cfg.eps) {
        return Err(Error::arg("gradcheck", format!("eps {} outside [1e-7, 1e-3]", cfg.eps)));
    }
    let mut tape = Tape::new();
    let out = f(&mut tape, params)?;
    if tape.real(out)?.numel() != 1 {
        return Err(Error::dim("gradcheck", "loss must be scalar"));
    }
    let grads = backward(&tape, out, None)?;

    let mut reports = Vec::with_capacity(params.len());
    for (k, (name, value)) in params.iter().enumerate() {
        let numel = value.numel();
        let coords: Vec<usize> = if numel <= cfg.max_coords {
            (0..numel).collect()
        } else {
            let mut rng = seeded(mix_seed(cfg.seed, k as u64));
            let mut idx = sample(&mut rng, numel, cfg.max_coords.max(64)).into_vec();
            idx.sort_unstable();
            idx
        };
        let analytic: Vec<f64> = match grads.get(name) {
            Some(g) => coords.iter().map(|&i| g.data()[i]).collect(),
            None => vec![0.0; coords.len()],
        };
        let numeric = coords
            .par_iter()
            .map(|&i| {
                let x0 = value.data()[i];
                let mut plus = params.clone();
                plus.insert(name.clone(), value.with_value(i, x0 + cfg.eps)?);
                let mut minus = params.clone();
                minus.insert(name.clone(), value.with_value(i, x0 - cfg.eps)?);
                Ok((scalar_loss(&f, &plus)? - scalar_loss(&f, &minus)?) / (2.0 * cfg.eps))
            })
            .collect::<Result<Vec<f64>>>()?;
        reports.push(GradReport::compare(name, &analytic, &numeric, numel, cfg.tol));
    }
    Ok(reports)
}
