use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::math;
use crate::{Error, Result};

/// Plain SGD: `values -= lr * grads`, then grads are zeroed.
///
/// Fails without touching any value if a gradient is non-finite.
pub fn sgd_step(store: &mut ParamStore, lr: f64) -> Result<()> {
    check_finite(store)?;
    for (_, p) in store.iter_mut() {
        for (v, g) in p.values.iter_mut().zip(p.grads.iter_mut()) {
            *v -= lr * *g;
            *g = 0.0;
        }
    }
    Ok(())
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for (_, p) in store.iter_mut() {
            p.grads.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

fn check_finite(store: &ParamStore) -> Result<()> {
    for (name, p) in store.iter() {
        if p.grads().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Update rule with its per-parameter state. Adam uses
/// `β₁ = 0.9, β₂ = 0.999, ε = 1e-8` with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    steps: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, steps: 0, moments: BTreeMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies the accumulated gradients and zeroes them. Fails without
    /// touching any value if a gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.kind == OptimizerKind::Sgd {
            self.steps += 1;
            return sgd_step(store, self.lr);
        }
        check_finite(store)?;
        self.steps += 1;
        let c1 = 1.0 - math::powf(Self::BETA1, self.steps as f64);
        let c2 = 1.0 - math::powf(Self::BETA2, self.steps as f64);
        for (name, p) in store.iter_mut() {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; p.values.len()], vec![0.0; p.values.len()]));
            for i in 0..p.values.len() {
                let g = p.grads[i];
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g;
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g * g;
                p.values[i] -= self.lr * (m[i] / c1) / (math::sqrt(v[i] / c2) + Self::EPS);
                p.grads[i] = 0.0;
            }
        }
        Ok(())
    }
}
