//! Two-layer LSTM intention anticipator over fused hand features.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::diff::{Init, ParamStore, Tape, Var};
use crate::math;
use crate::motion::{Hand, MotionEncoder, PerHand};
use crate::policy::{sample_action, threshold_action, PolicyNet, TriggerTrace};
use crate::world::{EpisodeRecord, HAND_FREE};
use crate::{Error, Result};

/// Widths of every learned layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelDims {
    pub n_intentions: usize,
    pub n_objects: usize,
    /// Per-hand motion feature width.
    pub motion_dim: usize,
    /// Per-hand object embedding width.
    pub object_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub policy_hidden: [usize; 2],
}

impl ModelDims {
    pub fn new(n_intentions: usize, n_objects: usize, hidden: usize) -> Self {
        Self {
            n_intentions,
            n_objects,
            motion_dim: 32,
            object_dim: 16,
            embed_dim: 64,
            hidden,
            policy_hidden: [64, 32],
        }
    }

    pub fn fused_motion(&self) -> usize {
        2 * self.motion_dim
    }

    pub fn fused_object(&self) -> usize {
        2 * self.object_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_intentions,
            self.n_objects,
            self.motion_dim,
            self.object_dim,
            self.embed_dim,
            self.hidden,
            self.policy_hidden[0],
            self.policy_hidden[1],
        ];
        if dims.contains(&0) || self.n_intentions < 2 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder outputs of one frame: fused motion feature `[f_R ‖ f_L]` and the
/// raw object tokens of both hands.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrameFeatures {
    pub motion: Vec<f64>,
    pub object: PerHand<u16>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FeatureEpisode {
    pub id: u64,
    pub intention: usize,
    pub frames: Vec<FrameFeatures>,
}

impl FeatureEpisode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Concatenates per-hand features, right hand first.
pub fn fuse_hands(right: &[f64], left: &[f64], dim: usize) -> Result<Vec<f64>> {
    if right.len() != dim || left.len() != dim {
        return Err(Error::shape("fuse_hands", &[right.len(), left.len()], &[dim, dim]));
    }
    let mut out = Vec::with_capacity(2 * dim);
    out.extend_from_slice(right);
    out.extend_from_slice(left);
    Ok(out)
}

/// Runs the frozen encoder over every frame of a record.
pub fn extract_features(
    encoder: &MotionEncoder,
    store: &ParamStore,
    record: &EpisodeRecord,
    flip_channel: Option<usize>,
) -> Result<FeatureEpisode> {
    let dim = encoder.config.feature_dim;
    let frames = (0..record.len())
        .map(|i| {
            let r = encoder.hand_feature(store, &record.window(i, Hand::Right), flip_channel)?;
            let l = encoder.hand_feature(store, &record.window(i, Hand::Left), flip_channel)?;
            Ok(FrameFeatures {
                motion: fuse_hands(r.values(), l.values(), dim)?,
                object: record.frames[i].object,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureEpisode { id: record.episode_id, intention: record.intention, frames })
}

/// How the object stream is gated.
pub enum Gate<'a> {
    /// Object features at every frame; motion input zeroed.
    ObjectOnly,
    /// Motion features only; the object input stays at the hand-free pair.
    MotionOnly,
    /// Both streams at every frame.
    Combined,
    /// Object features refreshed only after a trigger.
    Triggered(TriggerRule<'a>),
}

/// Turns `π(a=1)` into a decision.
pub enum TriggerRule<'a> {
    Threshold(f64),
    Sample(&'a mut dyn RngCore),
    /// Pre-set decisions, one per frame.
    Fixed(&'a [bool]),
}

impl TriggerRule<'_> {
    fn decide(&mut self, p1: f64, t: usize) -> Result<bool> {
        match self {
            TriggerRule::Threshold(tau) => Ok(threshold_action(p1, *tau)),
            TriggerRule::Sample(rng) => Ok(sample_action(p1, &mut **rng)),
            TriggerRule::Fixed(a) => a.get(t).copied().ok_or(Error::shape("fixed actions", &[a.len()], &[t + 1])),
        }
    }
}

/// LSTM state plus the object feature carried into the next frame.
#[derive(Debug, Clone, Copy)]
pub struct AnticipatorState {
    pub h: [Var; 2],
    pub c: [Var; 2],
    pub object: Var,
}

/// Tape nodes of one episode.
#[derive(Debug, Clone)]
pub struct TapeRun {
    /// Intention distribution `p_t` per frame.
    pub probs: Vec<Var>,
    /// `log π(a_t)` per frame; empty unless the gate was policy driven.
    pub log_pi: Vec<Var>,
    pub trace: TriggerTrace,
}

/// Per-frame outputs of one episode, as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub trace: TriggerTrace,
}

const LSTM: [(&str, &str); 2] = [("rnn.lstm0.w", "rnn.lstm0.b"), ("rnn.lstm1.w", "rnn.lstm1.b")];

/// Floor applied before taking `log π`.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anticipator {
    pub dims: ModelDims,
}

impl Anticipator {
    pub const PREFIX: &'static str = "rnn.";

    pub fn new(dims: ModelDims) -> Self {
        Self { dims }
    }

    pub fn policy(&self) -> PolicyNet {
        PolicyNet {
            input_dim: self.dims.hidden + self.dims.fused_motion(),
            hidden: self.dims.policy_hidden,
        }
    }

    /// Declares the embedding, LSTM and output parameters.
    pub fn declare<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let d = &self.dims;
        d.validate()?;
        let h = d.hidden;
        store.declare("rnn.obj_emb", &[d.n_objects, d.object_dim], Init::FanIn, rng)?;
        let input = d.fused_motion() + d.fused_object() + 1;
        store.declare("rnn.emb.w", &[d.embed_dim, input], Init::FanIn, rng)?;
        store.declare("rnn.lstm0.w", &[4 * h, d.embed_dim + h], Init::FanIn, rng)?;
        store.declare("rnn.lstm0.b", &[4 * h], Init::Zeros, rng)?;
        store.declare("rnn.lstm1.w", &[4 * h, 2 * h], Init::FanIn, rng)?;
        store.declare("rnn.lstm1.b", &[4 * h], Init::Zeros, rng)?;
        store.declare("rnn.out.w", &[d.n_intentions, h], Init::FanIn, rng)?;
        store.declare("rnn.out.b", &[d.n_intentions], Init::Zeros, rng)?;
        Ok(())
    }

    /// Fused object feature `[e(o_R) ‖ e(o_L)]`.
    pub fn object_embed(&self, tape: &mut Tape, store: &ParamStore, tokens: PerHand<u16>) -> Result<Var> {
        for t in [tokens.right, tokens.left] {
            if t as usize >= self.dims.n_objects {
                return Err(Error::TokenOutOfRange { token: t as usize, n_objects: self.dims.n_objects });
            }
        }
        let table = tape.param(store, "rnn.obj_emb")?;
        let r = tape.row(table, tokens.right as usize)?;
        let l = tape.row(table, tokens.left as usize)?;
        tape.concat(&[r, l])
    }

    /// Affine embedding `W_g [f_m ‖ f_o ‖ 1]`.
    pub fn embed_fuse(&self, tape: &mut Tape, store: &ParamStore, motion: Var, object: Var) -> Result<Var> {
        let one = tape.constant(1.0);
        let x = tape.concat(&[motion, object, one])?;
        let w = tape.param(store, "rnn.emb.w")?;
        tape.matmul(w, x)
    }

    /// Zero LSTM state; the object input starts at the hand-free pair.
    pub fn initial_state(&self, tape: &mut Tape, store: &ParamStore) -> Result<AnticipatorState> {
        let zero = tape.vector(&vec![0.0; self.dims.hidden]);
        let object = self.object_embed(tape, store, PerHand::new(HAND_FREE, HAND_FREE))?;
        Ok(AnticipatorState { h: [zero; 2], c: [zero; 2], object })
    }

    /// Advances both LSTM layers by one input; gate order i, f, g, o.
    pub fn lstm_step(&self, tape: &mut Tape, store: &ParamStore, input: Var, state: &AnticipatorState) -> Result<AnticipatorState> {
        let h = self.dims.hidden;
        let mut next = *state;
        let mut x = input;
        for (layer, (wn, bn)) in LSTM.iter().enumerate() {
            let w = tape.param(store, wn)?;
            let b = tape.param(store, bn)?;
            let xh = tape.concat(&[x, state.h[layer]])?;
            let z = tape.matmul(w, xh)?;
            let z = tape.add(z, b)?;
            let zi = tape.slice(z, 0, h)?;
            let zf = tape.slice(z, h, h)?;
            let zg = tape.slice(z, 2 * h, h)?;
            let zo = tape.slice(z, 3 * h, h)?;
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let fc = tape.mul(f, state.c[layer])?;
            let ig = tape.mul(i, g)?;
            let c = tape.add(fc, ig)?;
            let tc = tape.tanh(c);
            let hn = tape.mul(o, tc)?;
            next.h[layer] = hn;
            next.c[layer] = c;
            x = hn;
        }
        Ok(next)
    }

    /// Intention distribution from the top-layer hidden state.
    pub fn predict(&self, tape: &mut Tape, store: &ParamStore, state: &AnticipatorState) -> Result<Var> {
        let w = tape.param(store, "rnn.out.w")?;
        let b = tape.param(store, "rnn.out.b")?;
        let z = tape.matmul(w, state.h[1])?;
        let z = tape.add(z, b)?;
        Ok(tape.softmax(z))
    }

    /// Unrolls one episode on `tape`. The gate decides `a_t` after frame
    /// `t`; a trigger makes frame `t+1` read its object tokens, otherwise
    /// the previous object feature is carried forward.
    pub fn run_on_tape(&self, tape: &mut Tape, store: &ParamStore, ep: &FeatureEpisode, mut gate: Gate<'_>) -> Result<TapeRun> {
        if ep.is_empty() {
            return Err(Error::Empty("episode"));
        }
        let fm_dim = self.dims.fused_motion();
        let policy = self.policy();
        let zeros = vec![0.0; fm_dim];
        let mut state = self.initial_state(tape, store)?;
        let mut probs = Vec::with_capacity(ep.len());
        let mut log_pi = Vec::new();
        let mut pis = Vec::new();
        let mut actions = Vec::with_capacity(ep.len());
        for (t, frame) in ep.frames.iter().enumerate() {
            if frame.motion.len() != fm_dim {
                return Err(Error::shape("frame motion", &[frame.motion.len()], &[fm_dim]));
            }
            if t > 0 && actions[t - 1] {
                state.object = self.object_embed(tape, store, frame.object)?;
            }
            let motion = match gate {
                Gate::ObjectOnly => tape.vector(&zeros),
                _ => tape.vector(&frame.motion),
            };
            let g = self.embed_fuse(tape, store, motion, state.object)?;
            state = self.lstm_step(tape, store, g, &state)?;
            probs.push(self.predict(tape, store, &state)?);
            let a = match &mut gate {
                Gate::ObjectOnly | Gate::Combined => true,
                Gate::MotionOnly => false,
                Gate::Triggered(rule) => {
                    let h = tape.detach(state.h[1]);
                    let pi = policy.forward(tape, store, h, motion)?;
                    let p1 = tape.value(pi)[1];
                    let a = rule.decide(p1, t)?;
                    let chosen = tape.pick(pi, a as usize)?;
                    log_pi.push(tape.log(chosen, LOG_FLOOR));
                    pis.push(p1);
                    a
                }
            };
            actions.push(a);
        }
        Ok(TapeRun { probs, log_pi, trace: TriggerTrace::new(pis, actions) })
    }

    /// Forward-only episode run.
    pub fn run_episode(&self, store: &ParamStore, ep: &FeatureEpisode, gate: Gate<'_>) -> Result<EpisodeRun> {
        let mut tape = Tape::new();
        let run = self.run_on_tape(&mut tape, store, ep, gate)?;
        let probs: Vec<Vec<f64>> = run.probs.iter().map(|&p| tape.value(p).to_vec()).collect();
        let labels = probs.iter().map(|p| math::argmax(p)).collect();
        Ok(EpisodeRun { probs, labels, trace: run.trace })
    }
}
