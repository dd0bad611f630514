//! Trigger policy: decides after each frame whether the next frame's
//! object observation is processed.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::diff::{Init, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Two tanh hidden layers and a two-way softmax over {skip, trigger}.
/// Parameters live under the `policy.` prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyNet {
    /// Hidden-state width plus fused motion width.
    pub input_dim: usize,
    pub hidden: [usize; 2],
}

const LAYERS: [(&str, &str); 3] = [
    ("policy.l1.w", "policy.l1.b"),
    ("policy.l2.w", "policy.l2.b"),
    ("policy.out.w", "policy.out.b"),
];

impl PolicyNet {
    pub const PREFIX: &'static str = "policy.";

    pub fn declare<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let widths = [self.input_dim, self.hidden[0], self.hidden[1], 2];
        for (i, (w, b)) in LAYERS.iter().enumerate() {
            store.declare(w, &[widths[i + 1], widths[i]], Init::FanIn, rng)?;
            store.declare(b, &[widths[i + 1]], Init::Zeros, rng)?;
        }
        Ok(())
    }

    /// Returns the `[π(a=0), π(a=1)]` node.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, motion: Var) -> Result<Var> {
        let mut x = tape.concat(&[hidden, motion])?;
        if tape.value(x).len() != self.input_dim {
            return Err(Error::shape("policy input", &[tape.value(x).len()], &[self.input_dim]));
        }
        for (i, (w, b)) in LAYERS.iter().enumerate() {
            let wv = tape.param(store, w)?;
            let bv = tape.param(store, b)?;
            let z = tape.matmul(wv, x)?;
            let z = tape.add(z, bv)?;
            x = if i < 2 { tape.tanh(z) } else { z };
        }
        Ok(tape.softmax(x))
    }

    /// Trigger probability `π(a=1 | h, f_m)`.
    pub fn trigger_prob(&self, store: &ParamStore, hidden: &[f64], motion: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let h = tape.vector(hidden);
        let m = tape.vector(motion);
        let p = self.forward(&mut tape, store, h, m)?;
        Ok(tape.value(p)[1])
    }
}

/// Bernoulli draw with success probability `p1`.
pub fn sample_action<R: RngCore + ?Sized>(p1: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < p1
}

/// Deterministic decision: trigger iff `p1 > tau`.
pub fn threshold_action(p1: f64, tau: f64) -> bool {
    p1 > tau
}

/// Per-frame trigger decisions of one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriggerTrace {
    /// `π(a=1)` per frame; empty when the gate was not policy driven.
    pub probs: Vec<f64>,
    pub actions: Vec<bool>,
    pub n: usize,
    pub ratio: f64,
}

impl TriggerTrace {
    pub fn new(probs: Vec<f64>, actions: Vec<bool>) -> Self {
        let n = actions.iter().filter(|&&a| a).count();
        let ratio = if actions.is_empty() { 0.0 } else { n as f64 / actions.len() as f64 };
        Self { probs, actions, n, ratio }
    }

    /// Trigger ratio over the first `frames` decisions.
    pub fn ratio_until(&self, frames: usize) -> f64 {
        let frames = frames.min(self.actions.len());
        if frames == 0 {
            return 0.0;
        }
        self.actions[..frames].iter().filter(|&&a| a).count() as f64 / frames as f64
    }
}
