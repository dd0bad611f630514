//! Anticipation loss, trigger reward, policy-gradient loss and the two
//! training stages of the anticipator.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::anticipator::{Anticipator, FeatureEpisode, Gate, TriggerRule};
use crate::diff::{clip_grad_norm, Optimizer, OptimizerKind, ParamStore, Tape, Var};
use crate::eval::{accuracy_at_fraction, EvalMode, Model};
use crate::math;
use crate::rng;
use crate::{Error, Result};

/// How many triggers the cost term of a frame's reward counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum TriggerCount {
    /// All triggers of the episode.
    #[default]
    Episode,
    /// Triggers up to and including the current frame.
    Prefix,
}

/// Which log-probabilities a frame's reward is credited to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Credit {
    /// `R_t` weights the log-likelihood of the whole sampled sequence.
    #[default]
    Sequence,
    /// `R_t` weights only `log π(a_t)`.
    Frame,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    /// Learning rate of anticipator pre-training.
    pub lr: f64,
    /// Learning rate of joint training.
    pub joint_lr: f64,
    pub hidden: usize,
    pub lambda: f64,
    pub reward_pos: f64,
    pub reward_neg: f64,
    /// Sampled trigger sequences per episode.
    pub samples: usize,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub tau_eval: f64,
    pub seed: u64,
    pub grad_clip: f64,
    pub trigger_count: TriggerCount,
    /// When false the reward ignores the trigger count (`n/T ≡ 0`).
    pub trigger_cost: bool,
    pub credit: Credit,
    /// Subtract the mean return of the episode's other samples.
    pub baseline: bool,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            joint_lr: 0.001,
            hidden: 256,
            lambda: 0.1,
            reward_pos: 100.0,
            reward_neg: -100.0,
            samples: 5,
            batch_size: 8,
            pretrain_epochs: 30,
            joint_epochs: 10,
            tau_eval: 0.5,
            seed: 0,
            grad_clip: 5.0,
            trigger_count: TriggerCount::Episode,
            trigger_cost: true,
            credit: Credit::Sequence,
            baseline: true,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite() && self.joint_lr > 0.0 && self.joint_lr.is_finite()) {
            return bad("learning rates must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.reward_pos > 0.0 && self.reward_neg < 0.0) {
            return bad("rewards must satisfy R+ > 0 > R-");
        }
        if self.samples == 0 || self.batch_size == 0 || self.hidden == 0 {
            return bad("samples, batch_size and hidden must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tau_eval) {
            return bad("tau_eval must lie in [0, 1]");
        }
        if self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// Weight of frame `t` of `T`: `exp(ln 0.1 · (T − t) / T)`, evaluated as
/// `0.1^((T − t) / T)` so both endpoints are exact.
pub fn anticipation_weight(t: f64, horizon: f64) -> f64 {
    math::powf(0.1, (horizon - t) / horizon)
}

/// Exponentially weighted cross-entropy over frames `t = 1..=T`, where
/// `p_gt[t-1]` is the probability of the true intention at frame `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnticipationLoss {
    pub value: f64,
    /// Frames whose probability fell below the log floor.
    pub clamped: usize,
}

pub const PROB_FLOOR: f64 = 1e-12;

pub fn anticipation_loss(p_gt: &[f64]) -> Result<AnticipationLoss> {
    if p_gt.is_empty() {
        return Err(Error::Empty("anticipation loss frames"));
    }
    let horizon = p_gt.len() as f64;
    let mut value = 0.0;
    let mut clamped = 0;
    for (i, &p) in p_gt.iter().enumerate() {
        if p <= PROB_FLOOR {
            clamped += 1;
        }
        value -= math::ln(p.max(PROB_FLOOR)) * anticipation_weight(i as f64 + 1.0, horizon);
    }
    Ok(AnticipationLoss { value, clamped })
}

/// Tape version of [`anticipation_loss`] over per-frame distributions.
pub fn anticipation_loss_on_tape(tape: &mut Tape, probs: &[Var], y_gt: usize) -> Result<Var> {
    if probs.is_empty() {
        return Err(Error::Empty("anticipation loss frames"));
    }
    let horizon = probs.len() as f64;
    let mut terms = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        let pg = tape.pick(p, y_gt)?;
        let lp = tape.log(pg, PROB_FLOOR);
        terms.push((lp, -anticipation_weight(i as f64 + 1.0, horizon)));
    }
    tape.weighted_sum(&terms)
}

/// Reward of one frame: `p(y_gt)·R⁺·(1 − n/T)` when `y_t = y_gt`, else
/// `p(y_gt)·R⁻·(n/T)`.
pub fn reward(p: &[f64], y_t: usize, y_gt: usize, n: usize, horizon: usize, cfg: &TrainConfig) -> f64 {
    let cost = if cfg.trigger_cost { n as f64 / horizon as f64 } else { 0.0 };
    if y_t == y_gt {
        p[y_gt] * cfg.reward_pos * (1.0 - cost)
    } else {
        p[y_gt] * cfg.reward_neg * cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardRecord {
    pub rewards: Vec<f64>,
    pub n: usize,
    pub horizon: usize,
}

/// Per-frame rewards of one sampled run.
pub fn episode_rewards(probs: &[Vec<f64>], actions: &[bool], y_gt: usize, cfg: &TrainConfig) -> RewardRecord {
    let horizon = probs.len();
    let n = actions.iter().filter(|&&a| a).count();
    let mut prefix = 0;
    let rewards = probs
        .iter()
        .zip(actions)
        .map(|(p, &a)| {
            prefix += a as usize;
            let count = match cfg.trigger_count {
                TriggerCount::Episode => n,
                TriggerCount::Prefix => prefix,
            };
            reward(p, math::argmax(p), y_gt, count, horizon, cfg)
        })
        .collect();
    RewardRecord { rewards, n, horizon }
}

/// `log π(a_t)` nodes and rewards of one sampled trigger sequence.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub log_pi: Vec<Var>,
    pub rewards: Vec<f64>,
}

/// Score-function loss over `K` samples of one episode, normalised by
/// `K·T`. Its gradient is the REINFORCE estimate of `−∇ E[Σ_t R_t]/T`
/// under [`Credit::Sequence`]. With `baseline` each sample's return is
/// reduced by the mean return of the other `K−1` samples, which leaves the
/// estimate unbiased.
pub fn policy_loss(tape: &mut Tape, samples: &[PolicySample], credit: Credit, baseline: bool) -> Result<Var> {
    let horizon = samples.first().ok_or(Error::Empty("policy samples"))?.log_pi.len();
    if horizon == 0 {
        return Err(Error::Empty("trigger trace"));
    }
    for s in samples {
        if s.log_pi.len() != horizon || s.rewards.len() != horizon {
            return Err(Error::shape("policy sample", &[s.log_pi.len(), s.rewards.len()], &[horizon]));
        }
    }
    let k = samples.len();
    let scale = -1.0 / (k * horizon) as f64;
    let others = |total: f64, own: f64| if baseline && k > 1 { (total - own) / (k - 1) as f64 } else { 0.0 };
    let mut terms = Vec::with_capacity(k * horizon);
    match credit {
        Credit::Sequence => {
            let returns: Vec<f64> = samples.iter().map(|s| s.rewards.iter().sum()).collect();
            let all: f64 = returns.iter().sum();
            for (s, &ret) in samples.iter().zip(&returns) {
                let w = scale * (ret - others(all, ret));
                terms.extend(s.log_pi.iter().map(|&lp| (lp, w)));
            }
        }
        Credit::Frame => {
            let all: Vec<f64> = (0..horizon).map(|t| samples.iter().map(|s| s.rewards[t]).sum()).collect();
            for s in samples {
                for (t, (&lp, &r)) in s.log_pi.iter().zip(&s.rewards).enumerate() {
                    terms.push((lp, scale * (r - others(all[t], r))));
                }
            }
        }
    }
    tape.weighted_sum(&terms)
}

/// Summary of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-episode anticipation loss.
    pub anticipation_loss: f64,
    /// Mean per-episode policy loss; zero during pre-training.
    pub policy_loss: f64,
    /// Mean sampled trigger ratio; 1 during pre-training.
    pub trigger_ratio: f64,
    /// Full-observation validation accuracy, when a validation set is given.
    pub val_accuracy: Option<f64>,
}

/// Mini-batches of episode indices with similar lengths. Batch order and
/// membership among equal lengths are shuffled.
pub fn length_batches(episodes: &[FeatureEpisode], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| episodes[i].len());
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

const INIT_STREAM: u64 = 0x494e_4954;
const BATCH_STREAM: u64 = 0x4241_5443;
const SAMPLE_STREAM: u64 = 0x5341_4d50;

fn check_finite(value: f64, what: &str, epoch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(format!("{what} is {value} at epoch {epoch}")))
    }
}

fn step(opt: &mut Optimizer, store: &mut ParamStore, cfg: &TrainConfig, epoch: usize) -> Result<()> {
    let norm = clip_grad_norm(store, cfg.grad_clip);
    check_finite(norm, "gradient norm", epoch)?;
    opt.step(store)
}

/// Declares the anticipator parameters that are not yet in `store`.
pub fn init_anticipator(model: &Anticipator, store: &mut ParamStore, seed: u64) -> Result<()> {
    if !store.contains("rnn.out.b") {
        let mut r = rng::stream(seed, &[INIT_STREAM, 0]);
        model.declare(store, &mut r)?;
    }
    Ok(())
}

/// Declares fresh, randomly initialised policy parameters, replacing any
/// existing ones.
pub fn init_policy(model: &Anticipator, store: &mut ParamStore, seed: u64) -> Result<()> {
    store.remove_prefix(crate::policy::PolicyNet::PREFIX);
    let mut r = rng::stream(seed, &[INIT_STREAM, 1]);
    model.policy().declare(store, &mut r)
}

/// Trains the anticipator with every object observation processed.
pub fn pretrain_anticipator(
    model: &Anticipator,
    store: &mut ParamStore,
    train: &[FeatureEpisode],
    val: &[FeatureEpisode],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats, &ParamStore),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training episodes"));
    }
    init_anticipator(model, store, cfg.seed)?;
    store.zero_grads();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut history = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 0..cfg.pretrain_epochs {
        let mut brng = rng::stream(cfg.seed, &[BATCH_STREAM, 0, epoch as u64]);
        let mut total = 0.0;
        let mut clamped = 0;
        for batch in length_batches(train, cfg.batch_size, &mut brng) {
            for &i in &batch {
                let ep = &train[i];
                let mut tape = Tape::new();
                let run = model.run_on_tape(&mut tape, store, ep, Gate::Combined)?;
                let la = anticipation_loss_on_tape(&mut tape, &run.probs, ep.intention)?;
                total += tape.scalar(la);
                let loss = tape.scale(la, 1.0 / batch.len() as f64);
                tape.backward(loss, store)?;
                clamped += tape.log_clamps();
            }
            step(&mut opt, store, cfg, epoch)?;
        }
        let anticipation_loss = total / train.len() as f64;
        check_finite(anticipation_loss, "anticipation loss", epoch)?;
        if clamped > 0 {
            log::warn!("epoch {epoch}: {clamped} frame probabilities clamped at the log floor");
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            Some(accuracy_at_fraction(&Model { anticipator: model, store }, val, 1.0, EvalMode::Combined)?)
        };
        let stats = EpochStats { epoch, anticipation_loss, policy_loss: 0.0, trigger_ratio: 1.0, val_accuracy };
        on_epoch(&stats, store);
        history.push(stats);
    }
    Ok(history)
}

/// Trains the policy and anticipator together on `L^P + λ·L^A`, with
/// `L^A` averaged over the sampled runs of an episode. Fresh policy
/// parameters are declared if `store` has none.
pub fn joint_train(
    model: &Anticipator,
    store: &mut ParamStore,
    train: &[FeatureEpisode],
    val: &[FeatureEpisode],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats, &ParamStore),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training episodes"));
    }
    if !store.contains("rnn.out.b") {
        return Err(Error::UnknownParam("rnn.out.b".into()));
    }
    if !store.contains("policy.out.b") {
        init_policy(model, store, cfg.seed)?;
    }
    store.zero_grads();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.joint_lr);
    let k = cfg.samples;
    let mut history = Vec::with_capacity(cfg.joint_epochs);
    for epoch in 0..cfg.joint_epochs {
        let mut brng = rng::stream(cfg.seed, &[BATCH_STREAM, 1, epoch as u64]);
        let (mut total_a, mut total_p, mut total_ratio) = (0.0, 0.0, 0.0);
        let mut degenerate = 0;
        for batch in length_batches(train, cfg.batch_size, &mut brng) {
            for &i in &batch {
                let ep = &train[i];
                let mut srng = rng::stream(cfg.seed, &[SAMPLE_STREAM, epoch as u64, ep.id]);
                let mut tape = Tape::new();
                let mut samples = Vec::with_capacity(k);
                let mut la_terms = Vec::with_capacity(k);
                let mut first_reward = None;
                let mut all_equal = true;
                for _ in 0..k {
                    let run = model.run_on_tape(&mut tape, store, ep, Gate::Triggered(TriggerRule::Sample(&mut srng)))?;
                    let probs: Vec<Vec<f64>> = run.probs.iter().map(|&p| tape.value(p).to_vec()).collect();
                    let rec = episode_rewards(&probs, &run.trace.actions, ep.intention, cfg);
                    for &r in &rec.rewards {
                        all_equal &= *first_reward.get_or_insert(r) == r;
                    }
                    total_ratio += run.trace.ratio / k as f64;
                    let la = anticipation_loss_on_tape(&mut tape, &run.probs, ep.intention)?;
                    total_a += tape.scalar(la) / k as f64;
                    la_terms.push((la, cfg.lambda / k as f64));
                    samples.push(PolicySample { log_pi: run.log_pi, rewards: rec.rewards });
                }
                if all_equal {
                    degenerate += 1;
                }
                let lp = policy_loss(&mut tape, &samples, cfg.credit, cfg.baseline)?;
                let la = tape.weighted_sum(&la_terms)?;
                total_p += tape.scalar(lp);
                let sum = tape.weighted_sum(&[(lp, 1.0), (la, 1.0)])?;
                let loss = tape.scale(sum, 1.0 / batch.len() as f64);
                tape.backward(loss, store)?;
            }
            step(&mut opt, store, cfg, epoch)?;
        }
        let n = train.len() as f64;
        let stats = EpochStats {
            epoch,
            anticipation_loss: total_a / n,
            policy_loss: total_p / n,
            trigger_ratio: total_ratio / n,
            val_accuracy: if val.is_empty() {
                None
            } else {
                let m = Model { anticipator: model, store };
                Some(accuracy_at_fraction(&m, val, 1.0, EvalMode::Triggered(cfg.tau_eval))?)
            },
        };
        check_finite(stats.anticipation_loss, "anticipation loss", epoch)?;
        check_finite(stats.policy_loss, "policy loss", epoch)?;
        if degenerate > 0 {
            log::warn!("epoch {epoch}: {degenerate} episodes had constant rewards across all samples");
        }
        on_epoch(&stats, store);
        history.push(stats);
    }
    Ok(history)
}
