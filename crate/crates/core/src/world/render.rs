use alloc::vec::Vec;

use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::templates::synth_window;
use super::{ActionStep, World};
use crate::motion::{AccelWindow, Hand, MotionClass, PerHand};
use crate::rng;
use crate::{Error, Result};

/// One half-second tick of sensor data.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub tick: usize,
    pub accel: PerHand<AccelWindow>,
    pub object: PerHand<u16>,
}

/// A rendered episode with raw acceleration windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub intention: usize,
    pub sequence_id: usize,
    pub frames: Vec<Frame>,
}

impl Episode {
    /// Horizon `T`, in ticks.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-tick ground truth of a compact episode: motion classes instead of
/// raw windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrameRecord {
    pub tick: usize,
    pub motion: PerHand<MotionClass>,
    pub object: PerHand<u16>,
}

/// Compact, self-describing episode. Raw windows are re-rendered from
/// `window_seed` on demand, so a record and its [`Episode`] carry the same
/// information.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub intention: usize,
    pub sequence_id: usize,
    pub window_seed: u64,
    pub accel_noise_sd: f64,
    pub frames: Vec<FrameRecord>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn window(&self, frame: usize, hand: Hand) -> AccelWindow {
        let f = &self.frames[frame];
        let mut r = rng::stream(self.window_seed, &[frame as u64, hand as u64]);
        synth_window(*f.motion.get(hand), hand, self.accel_noise_sd, &mut r)
    }

    pub fn render(&self) -> Episode {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| Frame {
                tick: f.tick,
                accel: PerHand::new(self.window(i, Hand::Right), self.window(i, Hand::Left)),
                object: f.object,
            })
            .collect();
        Episode {
            id: self.episode_id,
            intention: self.intention,
            sequence_id: self.sequence_id,
            frames,
        }
    }
}

/// Realised timeline of one rendering: actions with jittered durations and
/// the idle gaps between them, plus the emitted per-tick stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePlan {
    pub intention: usize,
    pub sequence_id: usize,
    pub actions: Vec<ActionStep>,
    pub frames: Vec<FrameRecord>,
    pub window_seed: u64,
}

impl EpisodePlan {
    pub fn into_record(self, episode_id: u64, accel_noise_sd: f64) -> EpisodeRecord {
        EpisodeRecord {
            episode_id,
            intention: self.intention,
            sequence_id: self.sequence_id,
            window_seed: self.window_seed,
            accel_noise_sd,
            frames: self.frames,
        }
    }
}

fn noisy_token<R: Rng + ?Sized>(token: u16, n_objects: usize, flip_prob: f64, rng: &mut R) -> u16 {
    if flip_prob > 0.0 && rng.gen_bool(flip_prob) {
        // Uniform over the other tokens.
        let t = rng.gen_range(0..n_objects as u16 - 1);
        if t >= token {
            t + 1
        } else {
            t
        }
    } else {
        token
    }
}

pub fn plan_episode<R: Rng + ?Sized>(world: &World, sequence_id: usize, rng: &mut R) -> Result<EpisodePlan> {
    let seq = world.sequence(sequence_id)?;
    let spec = &world.spec;
    let jitter = spec.noise.duration_jitter as i64;
    let mut actions = Vec::with_capacity(2 * seq.steps.len());
    for (i, step) in seq.steps.iter().enumerate() {
        if i > 0 && spec.max_gap > 0 {
            let gap = rng.gen_range(0..=spec.max_gap);
            if gap > 0 {
                actions.push(ActionStep::idle(gap));
            }
        }
        let d = if jitter > 0 {
            step.duration as i64 + rng.gen_range(-jitter..=jitter)
        } else {
            step.duration as i64
        };
        let duration = d.max(spec.duration_range.0 as i64) as u32;
        actions.push(ActionStep { duration, ..*step });
    }
    let flip = spec.noise.object_token_flip_prob;
    let mut frames = Vec::new();
    for a in &actions {
        for _ in 0..a.duration {
            let object = PerHand::new(
                noisy_token(a.object.right, spec.n_objects, flip, rng),
                noisy_token(a.object.left, spec.n_objects, flip, rng),
            );
            frames.push(FrameRecord { tick: frames.len(), motion: a.motion, object });
        }
    }
    debug_assert!(frames.len() >= 2);
    Ok(EpisodePlan {
        intention: seq.intention,
        sequence_id,
        actions,
        frames,
        window_seed: rng.gen(),
    })
}

/// Renders one episode of `sequence_id`, including raw windows.
pub fn render_episode<R: Rng + ?Sized>(world: &World, sequence_id: usize, rng: &mut R) -> Result<Episode> {
    let plan = plan_episode(world, sequence_id, rng)?;
    Ok(plan
        .into_record(sequence_id as u64, world.spec.noise.accel_noise_sd)
        .render())
}

const EPISODE_STREAM: u64 = 0x4550_4953;

/// `replicas` compact episodes of every sequence, sequence-major. Each
/// episode draws from its own stream derived from
/// `(world seed, sequence id, replica)`.
pub fn generate_dataset(world: &World, replicas: usize) -> Result<Vec<EpisodeRecord>> {
    if replicas == 0 {
        return Err(Error::Empty("replicas"));
    }
    let mut out = Vec::with_capacity(world.sequences.len() * replicas);
    for seq in &world.sequences {
        for r in 0..replicas {
            let mut rng = rng::stream(world.spec.rng_seed, &[EPISODE_STREAM, seq.id as u64, r as u64]);
            let plan = plan_episode(world, seq.id, &mut rng)?;
            let id = (seq.id * replicas + r) as u64;
            out.push(plan.into_record(id, world.spec.noise.accel_noise_sd));
        }
    }
    Ok(out)
}
