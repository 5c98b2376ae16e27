//! Named, shape-tagged learnable parameters.

use std::collections::{BTreeMap, HashMap};

use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::rng::{mix_seed, seeded};
use crate::tensor::{Shape, Tensor};

/// Parameters keyed by dotted name (`prefix.field`), iterated in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Element = f64> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Fetches `name` and checks its shape.
    pub fn expect(&self, name: &str, shape: Shape) -> Result<Tensor<T>> {
        let t = self.get(name)?;
        if t.shape() != shape {
            return Err(Error::dim(
                "param_store",
                format!("`{name}` has shape {:?}, expected {shape:?}", t.shape()),
            ));
        }
        Ok(t.clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn total_numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn extend(&mut self, other: ParamStore<T>) {
        self.tensors.extend(other.tensors);
    }

    pub fn cast<U: Element>(&self) -> Result<ParamStore<U>> {
        let mut out = ParamStore::new();
        for (k, v) in &self.tensors {
            out.insert(k.clone(), v.cast()?);
        }
        Ok(out)
    }
}

/// How a parameter is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Zeros,
    Ones,
    Normal { mean: f64, std: f64 },
    /// `[C_out, C_in, k, k]` kernel that copies input channel `o + offset`
    /// to output `o` through the kernel centre (odd `k`,
    /// `C_in >= C_out + offset`).
    Eye { offset: usize },
}

impl Fill {
    fn materialize<T: Element>(self, shape: Shape, seed: u64) -> Result<Tensor<T>> {
        match self {
            Fill::Zeros => Tensor::zeros(shape),
            Fill::Ones => Tensor::ones(shape),
            Fill::Normal { mean, std } => Tensor::randn(shape, mean, std, &mut seeded(seed)),
            Fill::Eye { offset } => {
                let [co, ci, kh, kw] = shape;
                if ci < co + offset || kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::arg(
                        "fill",
                        format!("eye fill (offset {offset}) does not fit kernel {shape:?}"),
                    ));
                }
                Tensor::from_fn(shape, |o, c, i, j| {
                    if c == o + offset && i == kh / 2 && j == kw / 2 {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
            }
        }
    }
}

/// Declaration of one learnable tensor: its fresh-construction fill and the
/// distribution used when randomizing every parameter (e.g. for gradient
/// checks).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub init: Fill,
    pub random: Fill,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Shape, init: Fill, random: Fill) -> Self {
        ParamSpec { name: name.into(), shape, init, random }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Where parameter values come from when materializing a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Declared fresh-construction fills (identity-at-initialization).
    Init,
    /// Every parameter drawn from its `random` distribution.
    Random,
    /// Every parameter zero.
    Zeros,
}

/// `1/√fan_in`, the scale used for random weights.
pub fn fan_in_std(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Materializes `specs` under `prefix`. Each tensor gets its own seed stream
/// derived from `seed` and its position, so adding parameters to one block
/// never perturbs another block's draws.
pub fn materialize<T: Element>(
    specs: &[ParamSpec],
    prefix: &str,
    source: Source,
    seed: u64,
) -> Result<ParamStore<T>> {
    let mut store = ParamStore::new();
    for (k, spec) in specs.iter().enumerate() {
        let fill = match source {
            Source::Init => spec.init,
            Source::Random => spec.random,
            Source::Zeros => Fill::Zeros,
        };
        let t = fill.materialize(spec.shape, mix_seed(seed, k as u64))?;
        store.insert(join(prefix, &spec.name), t);
    }
    Ok(store)
}

/// A block's parameters: declared specs plus a store keyed by the specs'
/// relative names.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<T: Element = f64> {
    specs: Vec<ParamSpec>,
    store: ParamStore<T>,
}

impl<T: Element> ParamBlock<T> {
    pub fn generate(specs: Vec<ParamSpec>, source: Source, seed: u64) -> Result<Self> {
        let store = materialize(&specs, "", source, seed)?;
        Ok(ParamBlock { specs, store })
    }

    /// Pulls every declared tensor `prefix.name` out of `store`, checking shapes.
    pub fn from_store(specs: Vec<ParamSpec>, store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let mut own = ParamStore::new();
        for spec in &specs {
            own.insert(spec.name.clone(), store.expect(&join(prefix, &spec.name), spec.shape)?);
        }
        Ok(ParamBlock { specs, store: own })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.store.get(name)
    }

    /// Tensors keyed by relative name.
    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    /// Replaces a declared tensor; the shape must match its spec.
    pub fn set(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        let spec = self
            .specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if spec.shape != t.shape() {
            return Err(Error::dim(
                "param_block",
                format!("`{name}` expects {:?}, got {:?}", spec.shape, t.shape()),
            ));
        }
        self.store.insert(name, t);
        Ok(())
    }

    /// Copy of the store with every name prefixed.
    pub fn to_store(&self, prefix: &str) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (k, v) in self.store.iter() {
            out.insert(join(prefix, k), v.clone());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.store.total_numel()
    }

    /// Registers every tensor on `tape` as a named leaf `prefix.name`.
    pub fn register(&self, tape: &mut Tape<T>, prefix: &str) -> Result<Bound> {
        let mut vars = HashMap::new();
        for (k, v) in self.store.iter() {
            let full = join(prefix, k);
            vars.insert(full.clone(), tape.param(full, v.clone())?);
        }
        Ok(Bound { vars })
    }
}

/// Parameter leaves of one registration, looked up by full name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// `get(prefix.name)`.
    pub fn at(&self, prefix: &str, name: &str) -> Result<Var> {
        self.get(&join(prefix, name))
    }
}

/// Prefixes every spec name with `prefix.`.
pub fn nest(prefix: &str, specs: Vec<ParamSpec>) -> Vec<ParamSpec> {
    specs
        .into_iter()
        .map(|s| ParamSpec { name: join(prefix, &s.name), ..s })
        .collect()
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn materialize_is_seeded_and_prefixed() {
        let specs = vec![
            ParamSpec::new("w", [2, 2, 3, 3], Fill::Eye { offset: 0 }, Fill::Normal { mean: 0.0, std: 1.0 }),
            ParamSpec::new("b", [1, 2, 1, 1], Fill::Zeros, Fill::Normal { mean: 1.0, std: 0.1 }),
        ];
        let a: ParamStore<f64> = materialize(&specs, "blk", Source::Random, 5).unwrap();
        let b: ParamStore<f64> = materialize(&specs, "blk", Source::Random, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("blk.w") && a.contains("blk.b"));
        let init: ParamStore<f64> = materialize(&specs, "blk", Source::Init, 5).unwrap();
        let w = init.get("blk.w").unwrap();
        assert_eq!(w.at(1, 1, 1, 1), 1.0);
        assert_eq!(w.sum(), 2.0);
        assert!(matches!(init.get("nope"), Err(Error::MissingParam(_))));
        assert!(init.expect("blk.b", [1, 3, 1, 1]).is_err());
    }
}
