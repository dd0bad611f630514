use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::{Error, Result};

/// Initialisation rule for a declared parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `[-s, s]`.
    Uniform(f64),
    /// Uniform in `±1/sqrt(fan_in)`, where `fan_in` is the product of all
    /// dimensions but the first.
    FanIn,
}

/// A named parameter array and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    shape: Vec<usize>,
    pub(super) values: Vec<f64>,
    pub(super) grads: Vec<f64>,
}

impl Param {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Named parameters with gradients. Iteration order is the name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

fn fan_in(shape: &[usize]) -> usize {
    if shape.len() <= 1 {
        shape.first().copied().unwrap_or(1)
    } else {
        shape[1..].iter().product()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new parameter with values drawn per `init` and zero grads.
    pub fn declare<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<&Param> {
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        let size: usize = shape.iter().product();
        if shape.is_empty() || size == 0 {
            return Err(Error::EmptyShape(name.to_string()));
        }
        let values = match init {
            Init::Zeros => vec![0.0; size],
            Init::Constant(c) => vec![c; size],
            Init::Uniform(s) => (0..size).map(|_| rng.gen_range(-1.0..=1.0) * s).collect(),
            Init::FanIn => {
                let s = 1.0 / math::sqrt(fan_in(shape) as f64);
                (0..size).map(|_| rng.gen_range(-1.0..=1.0) * s).collect()
            }
        };
        self.insert(name, shape, values)
    }

    /// Inserts a parameter with explicit values (e.g. from a checkpoint).
    pub fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<&Param> {
        if self.entries.contains_key(name) {
            return Err(Error::DuplicateParam(name.to_string()));
        }
        let size: usize = shape.iter().product();
        if shape.is_empty() || size == 0 {
            return Err(Error::EmptyShape(name.to_string()));
        }
        if values.len() != size {
            return Err(Error::shape("insert", shape, &[values.len()]));
        }
        let param = Param {
            shape: shape.to_vec(),
            grads: vec![0.0; size],
            values,
        };
        Ok(self.entries.entry(name.to_string()).or_insert(param))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn values_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.entries
            .get_mut(name)
            .map(|p| p.values.as_mut_slice())
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn grads_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.entries
            .get_mut(name)
            .map(|p| p.grads.as_mut_slice())
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Param::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        math::sqrt(
            self.entries
                .values()
                .flat_map(|p| p.grads.iter())
                .map(|g| g * g)
                .sum(),
        )
    }

    /// Removes every parameter whose name starts with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|k, _| !k.starts_with(prefix));
    }

    /// Copies every parameter of `other` into `self`, replacing existing ones.
    pub fn merge(&mut self, other: &ParamStore) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub(crate) fn accumulate(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if p.grads.len() != grad.len() {
            return Err(Error::shape("accumulate", &p.shape, &[grad.len()]));
        }
        for (g, d) in p.grads.iter_mut().zip(grad) {
            *g += d;
        }
        Ok(())
    }
}
