//! Accuracy at observation fractions, trigger ratios and threshold sweeps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::anticipator::{Anticipator, FeatureEpisode, Gate, TriggerRule};
use crate::diff::ParamStore;
use crate::world::observed_frames;
use crate::{Error, Result};

/// Which streams the model sees at inference time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    ObjectOnly,
    MotionOnly,
    Combined,
    /// Policy-gated with threshold `τ`.
    Triggered(f64),
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::ObjectOnly => "OO",
            EvalMode::MotionOnly => "MO",
            EvalMode::Combined => "Con.",
            EvalMode::Triggered(_) => "Mtr.",
        }
    }
}

/// Per-frame predicted labels and trigger decisions of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub labels: Vec<usize>,
    pub actions: Vec<bool>,
}

/// Anything that labels every frame of an episode.
pub trait Predictor {
    fn outcome(&self, ep: &FeatureEpisode, mode: EvalMode) -> Result<Outcome>;
}

/// A trained anticipator bound to its parameters.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub anticipator: &'a Anticipator,
    pub store: &'a ParamStore,
}

impl Predictor for Model<'_> {
    fn outcome(&self, ep: &FeatureEpisode, mode: EvalMode) -> Result<Outcome> {
        let gate = match mode {
            EvalMode::ObjectOnly => Gate::ObjectOnly,
            EvalMode::MotionOnly => Gate::MotionOnly,
            EvalMode::Combined => Gate::Combined,
            EvalMode::Triggered(tau) => Gate::Triggered(TriggerRule::Threshold(tau)),
        };
        let run = self.anticipator.run_episode(self.store, ep, gate)?;
        Ok(Outcome { labels: run.labels, actions: run.trace.actions })
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("observation fraction {f} outside (0, 1]")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold {tau} outside [0, 1]")))
    }
}

/// Accuracy and trigger ratio at each fraction, from one run per episode.
/// Outputs are causal, so the prediction after `⌈f·T⌉` frames of a full
/// run equals the one of a truncated run.
fn score<P: Predictor + ?Sized>(
    model: &P,
    episodes: &[FeatureEpisode],
    fractions: &[f64],
    mode: EvalMode,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Outcome>)> {
    if episodes.is_empty() {
        return Err(Error::Empty("evaluation episodes"));
    }
    for &f in fractions {
        check_fraction(f)?;
    }
    if let EvalMode::Triggered(tau) = mode {
        check_tau(tau)?;
    }
    let mut correct = vec![0usize; fractions.len()];
    let mut ratio = vec![0.0; fractions.len()];
    let mut outcomes = Vec::with_capacity(episodes.len());
    for ep in episodes {
        let out = model.outcome(ep, mode)?;
        for (i, &f) in fractions.iter().enumerate() {
            let cut = observed_frames(f, ep.len());
            if out.labels[cut - 1] == ep.intention {
                correct[i] += 1;
            }
            ratio[i] += out.actions[..cut].iter().filter(|&&a| a).count() as f64 / cut as f64;
        }
        outcomes.push(out);
    }
    let n = episodes.len() as f64;
    let acc = correct.iter().map(|&c| c as f64 / n).collect();
    let ratio = ratio.iter().map(|r| r / n).collect();
    Ok((acc, ratio, outcomes))
}

/// Fraction of episodes whose label after `⌈f·T⌉` frames is correct.
pub fn accuracy_at_fraction<P: Predictor + ?Sized>(
    model: &P,
    episodes: &[FeatureEpisode],
    fraction: f64,
    mode: EvalMode,
) -> Result<f64> {
    Ok(score(model, episodes, &[fraction], mode)?.0[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub mode: EvalMode,
    /// One entry per report fraction.
    pub accuracy: Vec<f64>,
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    /// Mean whole-episode trigger ratio.
    pub ratio: f64,
    /// One entry per sweep fraction.
    pub accuracy: Vec<f64>,
}

/// Observation fractions reported by a threshold sweep.
pub const SWEEP_FRACTIONS: [f64; 2] = [0.25, 1.0];

/// Policy-gated accuracy and trigger ratio for every `τ` in `taus`.
pub fn sweep_threshold<P: Predictor + ?Sized>(model: &P, episodes: &[FeatureEpisode], taus: &[f64]) -> Result<Vec<SweepRow>> {
    taus.iter()
        .map(|&tau| {
            let (accuracy, _, outcomes) = score(model, episodes, &SWEEP_FRACTIONS, EvalMode::Triggered(tau))?;
            let ratio = outcomes
                .iter()
                .map(|o| o.actions.iter().filter(|&&a| a).count() as f64 / o.actions.len() as f64)
                .sum::<f64>()
                / outcomes.len() as f64;
            Ok(SweepRow { tau, ratio, accuracy })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub fractions: Vec<f64>,
    pub episodes: usize,
    pub modes: Vec<ModeReport>,
    /// `confusion[true][predicted]` of the policy-gated mode at full
    /// observation.
    pub confusion: Vec<Vec<usize>>,
    pub sweep: Vec<SweepRow>,
}

impl EvalReport {
    pub fn mode(&self, name: &str) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode.name() == name)
    }
}

/// Evaluates all four modes, the confusion matrix of the gated mode at
/// `tau_eval`, and a sweep over `tau_grid`.
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    episodes: &[FeatureEpisode],
    n_intentions: usize,
    fractions: &[f64],
    tau_eval: f64,
    tau_grid: &[f64],
) -> Result<EvalReport> {
    if fractions.is_empty() {
        return Err(Error::Empty("fractions"));
    }
    let modes = [
        EvalMode::ObjectOnly,
        EvalMode::MotionOnly,
        EvalMode::Combined,
        EvalMode::Triggered(tau_eval),
    ];
    let mut reports = Vec::with_capacity(modes.len());
    let mut confusion = vec![vec![0usize; n_intentions]; n_intentions];
    for mode in modes {
        let (accuracy, ratio, outcomes) = score(model, episodes, fractions, mode)?;
        if let EvalMode::Triggered(_) = mode {
            for (ep, out) in episodes.iter().zip(&outcomes) {
                let pred = out.labels[ep.len() - 1];
                if ep.intention >= n_intentions || pred >= n_intentions {
                    return Err(Error::shape("confusion", &[ep.intention, pred], &[n_intentions]));
                }
                confusion[ep.intention][pred] += 1;
            }
        }
        reports.push(ModeReport { mode, accuracy, ratio });
    }
    let sweep = sweep_threshold(model, episodes, tau_grid)?;
    Ok(EvalReport {
        fractions: fractions.to_vec(),
        episodes: episodes.len(),
        modes: reports,
        confusion,
        sweep,
    })
}
