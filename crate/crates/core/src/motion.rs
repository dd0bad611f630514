//! Hand-motion encoder: a three-channel 1D-CNN over 2-second acceleration
//! windows, six motion classes, and the left-hand flip preprocessing.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::diff::{clip_grad_norm, Init, Optimizer, OptimizerKind, ParamStore, Tape, Var};
use crate::math;
use crate::{Error, Result};

pub const CHANNELS: usize = 3;
/// Samples per window: 2 s at 75 Hz.
pub const WINDOW_LEN: usize = 150;
pub const SAMPLE_RATE_HZ: usize = 75;
/// Consecutive windows overlap by one second.
pub const WINDOW_HOP: usize = 75;
/// Accelerometer range, in g.
pub const SENSOR_RANGE_G: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "lowercase"))]
pub enum Hand {
    Right,
    Left,
}

impl FromStr for Hand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "right" | "r" => Ok(Hand::Right),
            "left" | "l" => Ok(Hand::Left),
            other => Err(Error::InvalidWindow(format!("unknown hand `{other}`"))),
        }
    }
}

/// A value for each hand. Fused vectors always put the right hand first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PerHand<T> {
    pub right: T,
    pub left: T,
}

impl<T> PerHand<T> {
    pub fn new(right: T, left: T) -> Self {
        Self { right, left }
    }

    pub fn get(&self, hand: Hand) -> &T {
        match hand {
            Hand::Right => &self.right,
            Hand::Left => &self.left,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Hand, &T) -> U) -> PerHand<U> {
        PerHand {
            right: f(Hand::Right, &self.right),
            left: f(Hand::Left, &self.left),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum MotionClass {
    Lift,
    PickUp,
    PutDown,
    Pull,
    Stationary,
    Walking,
}

impl MotionClass {
    pub const COUNT: usize = 6;
    pub const ALL: [MotionClass; 6] = [
        MotionClass::Lift,
        MotionClass::PickUp,
        MotionClass::PutDown,
        MotionClass::Pull,
        MotionClass::Stationary,
        MotionClass::Walking,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Lift => "lift",
            MotionClass::PickUp => "pick_up",
            MotionClass::PutDown => "put_down",
            MotionClass::Pull => "pull",
            MotionClass::Stationary => "stationary",
            MotionClass::Walking => "walking",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidWindow(format!("unknown motion class `{s}`")))
    }
}

/// Three-axis acceleration over 150 samples, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelWindow {
    samples: Vec<f64>,
    hand: Hand,
}

impl AccelWindow {
    /// `samples` is channel-major: `[ax(0..150), ay(0..150), az(0..150)]`.
    pub fn new(samples: Vec<f64>, hand: Hand) -> Result<Self> {
        if samples.len() != CHANNELS * WINDOW_LEN {
            return Err(Error::InvalidWindow(format!(
                "expected {} samples, got {}",
                CHANNELS * WINDOW_LEN,
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite() || v.abs() > SENSOR_RANGE_G) {
            return Err(Error::InvalidWindow(format!("sample {v} outside ±{SENSOR_RANGE_G} g")));
        }
        Ok(Self { samples, hand })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn hand(&self) -> Hand {
        self.hand
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c * WINDOW_LEN..(c + 1) * WINDOW_LEN]
    }
}

/// Negates one channel. Applying it twice restores the samples.
pub fn mirror_channel(w: &AccelWindow, channel: usize) -> AccelWindow {
    let mut samples = w.samples.clone();
    for v in &mut samples[channel * WINDOW_LEN..(channel + 1) * WINDOW_LEN] {
        *v = -*v;
    }
    AccelWindow { samples, hand: w.hand }
}

/// Maps a left-hand window into the right-hand signal distribution by
/// negating `channel`. The result is labelled as a right-hand window.
pub fn flip_left(w: &AccelWindow, channel: usize) -> Result<AccelWindow> {
    if w.hand != Hand::Left {
        return Err(Error::FlipOnRightHand);
    }
    if channel >= CHANNELS {
        return Err(Error::InvalidWindow(format!("flip channel {channel} out of range")));
    }
    let mut out = mirror_channel(w, channel);
    out.hand = Hand::Right;
    Ok(out)
}

/// Cuts a 75 Hz stream of `[ax, ay, az]` samples into 150-sample windows
/// with a 75-sample hop. A trailing partial window is dropped.
pub fn window_stream(stream: &[[f64; 3]], hand: Hand) -> Result<Vec<AccelWindow>> {
    if stream.len() < WINDOW_LEN {
        return Err(Error::StreamTooShort(stream.len()));
    }
    let count = (stream.len() - WINDOW_LEN) / WINDOW_HOP + 1;
    (0..count)
        .map(|i| {
            let chunk = &stream[i * WINDOW_HOP..i * WINDOW_HOP + WINDOW_LEN];
            let mut samples = Vec::with_capacity(CHANNELS * WINDOW_LEN);
            for c in 0..CHANNELS {
                samples.extend(chunk.iter().map(|s| s[c]));
            }
            AccelWindow::new(samples, hand)
        })
        .collect()
}

/// Penultimate-layer (FC4) activation of the motion CNN.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeature(Vec<f64>);

impl MotionFeature {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Layer sizes of the motion CNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EncoderConfig {
    pub kernels: [usize; 3],
    pub channels: [usize; 3],
    pub pool: usize,
    pub feature_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kernels: [9, 5, 3],
            channels: [16, 32, 32],
            pool: 2,
            feature_dim: 32,
        }
    }
}

/// Outputs of one encoder pass on a tape.
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    pub feature: Var,
    pub logits: Var,
}

/// Conv+MaxPool ×3, FC4, then a six-way softmax layer. Parameters live
/// under the `motion.` prefix of a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MotionEncoder {
    pub config: EncoderConfig,
}

const CONV_NAMES: [(&str, &str); 3] = [
    ("motion.conv1.w", "motion.conv1.b"),
    ("motion.conv2.w", "motion.conv2.b"),
    ("motion.conv3.w", "motion.conv3.b"),
];

impl MotionEncoder {
    pub const PREFIX: &'static str = "motion.";

    pub fn new(config: EncoderConfig) -> Self {
        Self { config }
    }

    /// Length of the flattened conv stack output.
    pub fn flat_len(&self) -> usize {
        let mut len = WINDOW_LEN;
        for &k in &self.config.kernels {
            len = (len - k + 1) / self.config.pool;
        }
        len * self.config.channels[2]
    }

    pub fn declare<R: rand::Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let c = &self.config;
        let mut cin = CHANNELS;
        for (i, (w, b)) in CONV_NAMES.iter().enumerate() {
            store.declare(w, &[c.channels[i], cin, c.kernels[i]], Init::FanIn, rng)?;
            store.declare(b, &[c.channels[i]], Init::Zeros, rng)?;
            cin = c.channels[i];
        }
        store.declare("motion.fc4.w", &[c.feature_dim, self.flat_len()], Init::FanIn, rng)?;
        store.declare("motion.fc4.b", &[c.feature_dim], Init::Zeros, rng)?;
        store.declare("motion.out.w", &[MotionClass::COUNT, c.feature_dim], Init::FanIn, rng)?;
        store.declare("motion.out.b", &[MotionClass::COUNT], Init::Zeros, rng)?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, w: &AccelWindow) -> Result<EncoderOutput> {
        let mut x = tape.input(w.samples.clone(), &[CHANNELS, WINDOW_LEN])?;
        for (wn, bn) in CONV_NAMES {
            let wv = tape.param(store, wn)?;
            let bv = tape.param(store, bn)?;
            let y = tape.conv1d(x, wv, bv)?;
            let y = tape.relu(y);
            x = tape.max_pool1d(y, self.config.pool)?;
        }
        let flat_len = tape.value(x).len();
        let flat = tape.reshape(x, &[flat_len])?;
        let w4 = tape.param(store, "motion.fc4.w")?;
        let b4 = tape.param(store, "motion.fc4.b")?;
        let h = tape.matmul(w4, flat)?;
        let h = tape.add(h, b4)?;
        let feature = tape.relu(h);
        let wo = tape.param(store, "motion.out.w")?;
        let bo = tape.param(store, "motion.out.b")?;
        let logits = tape.matmul(wo, feature)?;
        let logits = tape.add(logits, bo)?;
        Ok(EncoderOutput { feature, logits })
    }

    /// Class posterior over the six motions.
    pub fn posterior(&self, store: &ParamStore, w: &AccelWindow) -> Result<[f64; MotionClass::COUNT]> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, w)?;
        let p = tape.softmax(out.logits);
        let mut post = [0.0; MotionClass::COUNT];
        post.copy_from_slice(tape.value(p));
        Ok(post)
    }

    pub fn classify(&self, store: &ParamStore, w: &AccelWindow) -> Result<MotionClass> {
        let post = self.posterior(store, w)?;
        Ok(MotionClass::ALL[math::argmax(&post)])
    }

    pub fn extract_fm(&self, store: &ParamStore, w: &AccelWindow) -> Result<MotionFeature> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, w)?;
        Ok(MotionFeature(tape.value(out.feature).to_vec()))
    }

    /// Feature of a window from either hand; left-hand windows are flipped
    /// on `flip_channel` first when one is given.
    pub fn hand_feature(
        &self,
        store: &ParamStore,
        w: &AccelWindow,
        flip_channel: Option<usize>,
    ) -> Result<MotionFeature> {
        match (w.hand(), flip_channel) {
            (Hand::Left, Some(c)) => self.extract_fm(store, &flip_left(w, c)?),
            _ => self.extract_fm(store, w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MotionTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for MotionTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 10,
            batch_size: 16,
            grad_clip: 5.0,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Trains the encoder with mini-batch SGD on cross-entropy. Returns the
/// mean training loss of every epoch.
pub fn train_encoder(
    encoder: &MotionEncoder,
    store: &mut ParamStore,
    examples: &[(AccelWindow, MotionClass)],
    cfg: &MotionTrainConfig,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::Empty("motion training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    store.zero_grads();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            for &i in batch {
                let (w, class) = &examples[i];
                let mut tape = Tape::new();
                let out = encoder.forward(&mut tape, store, w)?;
                let p = tape.softmax(out.logits);
                let pc = tape.pick(p, class.index())?;
                let lp = tape.log(pc, 1e-12);
                let loss = tape.scale(lp, -1.0 / batch.len() as f64);
                total += -tape.scalar(lp);
                tape.backward(loss, store)?;
            }
            clip_grad_norm(store, cfg.grad_clip);
            opt.step(store)?;
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("motion encoder loss at epoch {epoch}")));
        }
        log::debug!("motion epoch {epoch}: loss {mean:.5}");
        history.push(mean);
    }
    Ok(history)
}

/// Per-class accuracy counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassAccuracy {
    pub correct: [usize; MotionClass::COUNT],
    pub total: [usize; MotionClass::COUNT],
}

impl ClassAccuracy {
    pub fn overall(&self) -> f64 {
        let c: usize = self.correct.iter().sum();
        let t: usize = self.total.iter().sum();
        if t == 0 {
            0.0
        } else {
            c as f64 / t as f64
        }
    }

    pub fn class(&self, m: MotionClass) -> Option<f64> {
        let t = self.total[m.index()];
        (t > 0).then(|| self.correct[m.index()] as f64 / t as f64)
    }
}

/// Classification accuracy; left-hand windows are flipped when
/// `flip_channel` is set.
pub fn evaluate_encoder(
    encoder: &MotionEncoder,
    store: &ParamStore,
    examples: &[(AccelWindow, MotionClass)],
    flip_channel: Option<usize>,
) -> Result<ClassAccuracy> {
    let mut acc = ClassAccuracy::default();
    for (w, class) in examples {
        let input = match (w.hand(), flip_channel) {
            (Hand::Left, Some(c)) => flip_left(w, c)?,
            _ => w.clone(),
        };
        let pred = encoder.classify(store, &input)?;
        acc.total[class.index()] += 1;
        if pred == *class {
            acc.correct[class.index()] += 1;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ramp_window(hand: Hand) -> AccelWindow {
        let samples = (0..CHANNELS * WINDOW_LEN)
            .map(|i| ((i % 7) as f64 - 3.0) * 0.1)
            .collect();
        AccelWindow::new(samples, hand).unwrap()
    }

    #[test]
    fn window_validation() {
        assert!(AccelWindow::new(vec![0.0; 449], Hand::Right).is_err());
        let mut s = vec![0.0; 450];
        s[3] = 16.5;
        assert!(AccelWindow::new(s.clone(), Hand::Right).is_err());
        s[3] = f64::NAN;
        assert!(AccelWindow::new(s, Hand::Right).is_err());
    }

    #[test]
    fn flip_negates_only_the_configured_channel() {
        let mut samples = vec![0.5; CHANNELS * WINDOW_LEN];
        samples[0] = 1.0;
        samples[1] = -2.0;
        let w = AccelWindow::new(samples, Hand::Left).unwrap();
        let f = flip_left(&w, 0).unwrap();
        assert_eq!(f.hand(), Hand::Right);
        assert_eq!(&f.channel(0)[..2], &[-1.0, 2.0]);
        assert_eq!(f.channel(1), w.channel(1));
        assert_eq!(f.channel(2), w.channel(2));
    }

    #[test]
    fn flip_rejects_right_hand() {
        assert_eq!(flip_left(&ramp_window(Hand::Right), 0), Err(Error::FlipOnRightHand));
    }

    #[test]
    fn mirror_is_an_involution() {
        let w = ramp_window(Hand::Left);
        for c in 0..CHANNELS {
            assert_eq!(mirror_channel(&mirror_channel(&w, c), c), w);
        }
    }

    #[test]
    fn stream_windowing_uses_one_second_hop() {
        let stream: Vec<[f64; 3]> = (0..300).map(|i| [i as f64 / 100.0, 0.0, 0.0]).collect();
        let ws = window_stream(&stream, Hand::Right).unwrap();
        assert_eq!(ws.len(), 3);
        for (w, start) in ws.iter().zip([0usize, 75, 150]) {
            assert_eq!(w.channel(0)[0], start as f64 / 100.0);
        }
        assert_eq!(window_stream(&stream[..150], Hand::Right).unwrap().len(), 1);
        assert_eq!(window_stream(&stream[..149], Hand::Right).unwrap_err(), Error::StreamTooShort(149));
    }

    #[test]
    fn zero_window_with_zero_output_layer_is_uniform() {
        let enc = MotionEncoder::default();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        enc.declare(&mut store, &mut rng).unwrap();
        store.values_mut("motion.out.w").unwrap().iter_mut().for_each(|v| *v = 0.0);
        let w = AccelWindow::new(vec![0.0; 450], Hand::Right).unwrap();
        let post = enc.posterior(&store, &w).unwrap();
        for p in post {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn features_have_configured_dim_and_are_deterministic() {
        let enc = MotionEncoder::default();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        enc.declare(&mut store, &mut rng).unwrap();
        let w = ramp_window(Hand::Right);
        let a = enc.extract_fm(&store, &w).unwrap();
        let b = enc.extract_fm(&store, &w.clone()).unwrap();
        assert_eq!(a.values().len(), 32);
        assert_eq!(a, b);
        let post = enc.posterior(&store, &w).unwrap();
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn motion_names_round_trip() {
        for m in MotionClass::ALL {
            assert_eq!(m.name().parse::<MotionClass>().unwrap(), m);
            assert_eq!(MotionClass::from_index(m.index()), Some(m));
        }
        assert_eq!("L".parse::<Hand>().unwrap(), Hand::Left);
    }
}
