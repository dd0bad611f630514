//! Synthetic intention worlds.
//!
//! A world is a set of intentions, each reachable through one or more
//! action sequences. An action pairs a motion with an object for each
//! hand. Sequences of different intentions may share prefixes, and some
//! objects appear in several intentions, so a partial observation is
//! genuinely ambiguous.

mod render;
pub mod templates;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math;
use crate::motion::{MotionClass, PerHand};
use crate::rng;
use crate::{Error, Result};

pub use render::{
    generate_dataset, plan_episode, render_episode, Episode, EpisodePlan, EpisodeRecord, Frame, FrameRecord,
};

/// Token of the "hand free" object class.
pub const HAND_FREE: u16 = 0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default, deny_unknown_fields))]
pub struct NoiseSpec {
    /// Probability that an emitted object token is replaced by another one.
    pub object_token_flip_prob: f64,
    /// Per-sample Gaussian noise on acceleration, in g.
    pub accel_noise_sd: f64,
    /// Each action's duration is perturbed by up to this many ticks.
    pub duration_jitter: u32,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            object_token_flip_prob: 0.05,
            accel_noise_sd: 0.1,
            duration_jitter: 1,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            object_token_flip_prob: 0.0,
            accel_noise_sd: 0.0,
            duration_jitter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default, deny_unknown_fields))]
pub struct WorldSpec {
    pub n_intentions: usize,
    pub n_sequences: usize,
    /// Inclusive range of actions per sequence.
    pub seq_len_range: (usize, usize),
    /// Object vocabulary size, including the hand-free token 0.
    pub n_objects: usize,
    /// Probability that a new sequence copies a prefix of a sequence of
    /// another intention.
    pub shared_prefix_prob: f64,
    pub noise: NoiseSpec,
    pub rng_seed: u64,
    /// Inclusive range of nominal action durations, in half-second ticks.
    pub duration_range: (u32, u32),
    /// Idle gaps between actions last 0..=max_gap ticks.
    pub max_gap: u32,
    /// Probability that the left hand takes part in an action.
    pub left_hand_prob: f64,
    /// Probability that a new sequence repeats the motions and durations
    /// of a sequence of another intention with different objects of the
    /// same affordance, so that only objects tell the two apart.
    pub motion_twin_prob: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_intentions: 34,
            n_sequences: 164,
            seq_len_range: (2, 10),
            n_objects: 50,
            shared_prefix_prob: 0.3,
            noise: NoiseSpec::default(),
            rng_seed: 0,
            duration_range: (3, 8),
            max_gap: 2,
            left_hand_prob: 0.3,
            motion_twin_prob: 0.4,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InfeasibleSpec(format!("{name} = {p} is not a probability")))
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSpec(m.into()));
        if self.n_intentions == 0 {
            return bad("n_intentions must be positive");
        }
        if self.n_sequences < self.n_intentions {
            return Err(Error::InfeasibleSpec(format!(
                "n_sequences ({}) < n_intentions ({})",
                self.n_sequences, self.n_intentions
            )));
        }
        let (lo, hi) = self.seq_len_range;
        if lo == 0 || lo > hi {
            return bad("seq_len_range must satisfy 1 <= min <= max");
        }
        if self.n_objects < 3 || self.n_objects > u16::MAX as usize {
            return bad("n_objects must be in 3..=65535");
        }
        let (dlo, dhi) = self.duration_range;
        if dlo == 0 || dlo > dhi {
            return bad("duration_range must satisfy 1 <= min <= max");
        }
        if lo as u32 * dlo < 2 {
            return bad("episodes must last at least two ticks");
        }
        check_prob("shared_prefix_prob", self.shared_prefix_prob)?;
        check_prob("left_hand_prob", self.left_hand_prob)?;
        check_prob("motion_twin_prob", self.motion_twin_prob)?;
        check_prob("object_token_flip_prob", self.noise.object_token_flip_prob)?;
        if !(self.noise.accel_noise_sd >= 0.0 && self.noise.accel_noise_sd.is_finite()) {
            return bad("accel_noise_sd must be finite and non-negative");
        }
        Ok(())
    }
}

/// One action: a motion and an object per hand, held for `duration` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ActionStep {
    pub motion: PerHand<MotionClass>,
    pub object: PerHand<u16>,
    pub duration: u32,
}

impl ActionStep {
    pub fn idle(duration: u32) -> Self {
        Self {
            motion: PerHand::new(MotionClass::Stationary, MotionClass::Stationary),
            object: PerHand::new(HAND_FREE, HAND_FREE),
            duration,
        }
    }

    /// Same motions and objects, ignoring duration.
    pub fn same_action(&self, other: &ActionStep) -> bool {
        self.motion == other.motion && self.object == other.object
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ActionSequence {
    pub id: usize,
    pub intention: usize,
    pub steps: Vec<ActionStep>,
}

impl ActionSequence {
    fn starts_with(&self, prefix: &[ActionStep]) -> bool {
        prefix.len() <= self.steps.len() && self.steps.iter().zip(prefix).all(|(a, b)| a.same_action(b))
    }

    /// Frames of the noiseless rendering: one (motions, objects) pair per tick.
    pub fn nominal_stream(&self) -> Vec<(PerHand<MotionClass>, PerHand<u16>)> {
        self.steps
            .iter()
            .flat_map(|s| core::iter::repeat((s.motion, s.object)).take(s.duration as usize))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct World {
    pub spec: WorldSpec,
    pub sequences: Vec<ActionSequence>,
    /// Typical right-hand motion for each object token.
    pub affordance: Vec<MotionClass>,
}

const WORLD_STREAM: u64 = 0x5752_4c44;
const MAX_ATTEMPTS: usize = 10_000;

fn pick_affordance<R: Rng + ?Sized>(rng: &mut R) -> MotionClass {
    let u: f64 = rng.gen();
    if u < 0.4 {
        MotionClass::PickUp
    } else if u < 0.6 {
        MotionClass::Lift
    } else if u < 0.8 {
        MotionClass::Pull
    } else {
        MotionClass::PutDown
    }
}

struct Builder<'a, R: Rng> {
    spec: &'a WorldSpec,
    rng: R,
    affordance: Vec<MotionClass>,
    pools: Vec<Vec<u16>>,
}

impl<R: Rng> Builder<'_, R> {
    fn any_object(&mut self) -> u16 {
        self.rng.gen_range(1..self.spec.n_objects as u16)
    }

    fn pool_object(&mut self, intention: usize) -> u16 {
        if self.rng.gen_bool(0.8) {
            *self.pools[intention].choose(&mut self.rng).unwrap()
        } else {
            self.any_object()
        }
    }

    fn step_with(&mut self, intention: usize, right: u16) -> ActionStep {
        let right_motion = if self.rng.gen_bool(0.1) {
            MotionClass::Walking
        } else {
            self.affordance[right as usize]
        };
        let (left, left_motion) = if self.rng.gen_bool(self.spec.left_hand_prob) {
            let o = self.pool_object(intention);
            (o, self.affordance[o as usize])
        } else {
            (HAND_FREE, MotionClass::Stationary)
        };
        let (dlo, dhi) = self.spec.duration_range;
        ActionStep {
            motion: PerHand::new(right_motion, left_motion),
            object: PerHand::new(right, left),
            duration: self.rng.gen_range(dlo..=dhi),
        }
    }

    fn step(&mut self, intention: usize) -> ActionStep {
        let o = self.pool_object(intention);
        self.step_with(intention, o)
    }

    /// An object with the affordance of `like`, preferring the intention's
    /// pool and avoiding `like` itself when possible.
    fn same_affordance(&mut self, intention: usize, like: u16) -> u16 {
        if like == HAND_FREE {
            return HAND_FREE;
        }
        let a = self.affordance[like as usize];
        let pool: Vec<u16> = self.pools[intention]
            .iter()
            .copied()
            .filter(|&o| o != like && self.affordance[o as usize] == a)
            .collect();
        if let Some(&o) = pool.choose(&mut self.rng) {
            return o;
        }
        let any: Vec<u16> = (1..self.spec.n_objects as u16)
            .filter(|&o| o != like && self.affordance[o as usize] == a)
            .collect();
        any.choose(&mut self.rng).copied().unwrap_or(like)
    }

    fn motion_twin(&mut self, intention: usize, donor: &ActionSequence) -> Vec<ActionStep> {
        donor
            .steps
            .iter()
            .map(|st| ActionStep {
                object: PerHand::new(
                    self.same_affordance(intention, st.object.right),
                    self.same_affordance(intention, st.object.left),
                ),
                ..*st
            })
            .collect()
    }
}

/// Full action lists must be unique and never a prefix of another.
fn clashes(sequences: &[ActionSequence], candidate: &ActionSequence) -> bool {
    sequences
        .iter()
        .any(|s| s.starts_with(&candidate.steps) || candidate.starts_with(&s.steps))
}

/// Builds a world deterministically from `spec.rng_seed`.
pub fn build_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = rng::stream(spec.rng_seed, &[WORLD_STREAM]);
    let affordance: Vec<MotionClass> = (0..spec.n_objects)
        .map(|o| if o == 0 { MotionClass::Stationary } else { pick_affordance(&mut rng) })
        .collect();
    let pool_size = 4.min(spec.n_objects - 1);
    let mut objects: Vec<u16> = (1..spec.n_objects as u16).collect();
    let mut pools: Vec<Vec<u16>> = (0..spec.n_intentions)
        .map(|_| {
            objects.shuffle(&mut rng);
            objects[..pool_size].to_vec()
        })
        .collect();
    // One object is shared by the first two intentions.
    let shared = pools[0][0];
    if spec.n_intentions >= 2 && !pools[1].contains(&shared) {
        pools[1][0] = shared;
    }

    let mut intentions: Vec<usize> = (0..spec.n_intentions).collect();
    for _ in spec.n_intentions..spec.n_sequences {
        intentions.push(rng.gen_range(0..spec.n_intentions));
    }

    let mut b = Builder { spec, rng, affordance, pools };
    let mut sequences: Vec<ActionSequence> = Vec::with_capacity(spec.n_sequences);
    for (id, &intention) in intentions.iter().enumerate() {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            if id >= 2 && b.rng.gen_bool(spec.motion_twin_prob) {
                let donors: Vec<&ActionSequence> =
                    sequences.iter().filter(|s| s.intention != intention).collect();
                if let Some(&donor) = donors.choose(&mut b.rng) {
                    let candidate = ActionSequence { id, intention, steps: b.motion_twin(intention, donor) };
                    if !clashes(&sequences, &candidate) {
                        accepted = Some(candidate);
                        break;
                    }
                    continue;
                }
            }
            let (lo, hi) = spec.seq_len_range;
            let len = b.rng.gen_range(lo..=hi);
            let mut steps = Vec::with_capacity(len);
            if len >= 2 && b.rng.gen_bool(spec.shared_prefix_prob) {
                let donors: Vec<&ActionSequence> = sequences
                    .iter()
                    .filter(|s| s.intention != intention && s.steps.len() >= 2)
                    .collect();
                if let Some(donor) = donors.choose(&mut b.rng) {
                    let k = b.rng.gen_range(1..len.min(donor.steps.len()));
                    steps.extend_from_slice(&donor.steps[..k]);
                }
            }
            while steps.len() < len {
                let s = b.step(intention);
                steps.push(s);
            }
            if spec.n_intentions >= 2 && id < 2 {
                let at = if id == 0 { 0 } else { steps.len() - 1 };
                steps[at] = b.step_with(intention, shared);
            }
            let candidate = ActionSequence { id, intention, steps };
            if !clashes(&sequences, &candidate) {
                accepted = Some(candidate);
                break;
            }
        }
        let seq = accepted.ok_or_else(|| {
            Error::InfeasibleSpec(format!("could not build a unique action sequence #{id}"))
        })?;
        sequences.push(seq);
    }
    Ok(World {
        spec: spec.clone(),
        sequences,
        affordance: b.affordance,
    })
}

impl World {
    pub fn sequence(&self, id: usize) -> Result<&ActionSequence> {
        self.sequences.get(id).ok_or(Error::UnknownSequence(id))
    }

    pub fn sequences_of(&self, intention: usize) -> impl Iterator<Item = &ActionSequence> {
        self.sequences.iter().filter(move |s| s.intention == intention)
    }

    /// Objects (excluding hand-free) used by more than one intention.
    pub fn shared_objects(&self) -> Vec<u16> {
        let mut users: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.spec.n_objects];
        for s in &self.sequences {
            for st in &s.steps {
                for o in [st.object.right, st.object.left] {
                    users[o as usize].insert(s.intention);
                }
            }
        }
        (1..self.spec.n_objects)
            .filter(|&o| users[o].len() >= 2)
            .map(|o| o as u16)
            .collect()
    }

    /// Accuracy of the Bayes-optimal predictor that sees the first
    /// `⌈fraction·T⌉` ticks of each sequence's noiseless stream, with a
    /// uniform prior over sequences. Ties go to the lowest intention.
    pub fn bayes_accuracy(&self, fraction: f64) -> f64 {
        let streams: Vec<_> = self.sequences.iter().map(ActionSequence::nominal_stream).collect();
        self.bayes_over(fraction, &streams)
    }

    /// As [`bayes_accuracy`](Self::bayes_accuracy), seeing motions only.
    pub fn motion_bayes_accuracy(&self, fraction: f64) -> f64 {
        let streams: Vec<Vec<_>> = self
            .sequences
            .iter()
            .map(|s| s.nominal_stream().into_iter().map(|(m, _)| m).collect())
            .collect();
        self.bayes_over(fraction, &streams)
    }

    fn bayes_over<K: PartialEq>(&self, fraction: f64, streams: &[Vec<K>]) -> f64 {
        let mut correct = 0usize;
        for (s, stream) in self.sequences.iter().zip(streams) {
            let cut = observed_frames(fraction, stream.len());
            let prefix = &stream[..cut];
            let mut counts = vec![0usize; self.spec.n_intentions];
            for (other, os) in self.sequences.iter().zip(streams) {
                if os.len() >= cut && &os[..cut] == prefix {
                    counts[other.intention] += 1;
                }
            }
            let best = (0..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
            if best == s.intention {
                correct += 1;
            }
        }
        correct as f64 / self.sequences.len() as f64
    }
}

/// `⌈f·T⌉`, clamped to `1..=T`.
pub fn observed_frames(fraction: f64, total: usize) -> usize {
    let n = math::ceil(fraction * total as f64 - 1e-9) as usize;
    n.clamp(1, total.max(1))
}

/// Train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Largest-remainder apportionment of `n` items over `ratios`.
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = math::floor(exact[i] + 1e-9) as usize;
    }
    let mut left = n - counts.iter().sum::<usize>().min(n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Stratified split by intention label. Every split with a positive ratio
/// receives at least one item of every intention, or the split fails.
pub fn split_dataset<T: Clone, R: Rng + ?Sized>(
    items: &[T],
    intention_of: impl Fn(&T) -> usize,
    ratios: [f64; 3],
    rng: &mut R,
) -> Result<Split<T>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios(format!("{ratios:?} must be non-negative and sum to 1")));
    }
    let n_labels = items.iter().map(&intention_of).max().map_or(0, |m| m + 1);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (i, it) in items.iter().enumerate() {
        by_label[intention_of(it)].push(i);
    }
    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    let mut infeasible = Vec::new();
    for (label, idx) in by_label.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let counts = apportion(idx.len(), ratios);
        if (0..3).any(|k| ratios[k] > 0.0 && counts[k] == 0) {
            infeasible.push(label);
            continue;
        }
        idx.shuffle(rng);
        let (a, rest) = idx.split_at(counts[0]);
        let (b, c) = rest.split_at(counts[1]);
        split.train.extend(a.iter().map(|&i| items[i].clone()));
        split.val.extend(b.iter().map(|&i| items[i].clone()));
        split.test.extend(c.iter().map(|&i| items[i].clone()));
    }
    if !infeasible.is_empty() {
        return Err(Error::Stratification(infeasible));
    }
    Ok(split)
}
