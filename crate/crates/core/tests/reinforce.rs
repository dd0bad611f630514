//! The sampled score-function gradient against the exact gradient of the
//! expected reward, computed by enumerating every trigger pattern.

use anticipate_core::anticipator::{Anticipator, FeatureEpisode, FrameFeatures, Gate, ModelDims, TriggerRule};
use anticipate_core::diff::{analytic_gradients, ParamStore, Tape};
use anticipate_core::motion::PerHand;
use anticipate_core::rng;
use anticipate_core::train::{episode_rewards, policy_loss, Credit, PolicySample, TrainConfig};
use rand::Rng;

const T: usize = 4;

fn setup() -> (Anticipator, ParamStore, FeatureEpisode) {
    setup_seeded(8)
}

fn setup_seeded(seed: u64) -> (Anticipator, ParamStore, FeatureEpisode) {
    let dims = ModelDims {
        n_intentions: 3,
        n_objects: 5,
        motion_dim: 2,
        object_dim: 3,
        embed_dim: 6,
        hidden: 4,
        policy_hidden: [6, 4],
    };
    let model = Anticipator::new(dims);
    let mut store = ParamStore::new();
    let mut r = rng::stream(seed, &[]);
    model.declare(&mut store, &mut r).unwrap();
    model.policy().declare(&mut store, &mut r).unwrap();
    // A strong object embedding so triggering changes the prediction.
    for v in store.values_mut("rnn.obj_emb").unwrap() {
        *v *= 6.0;
    }
    let frames = (0..T)
        .map(|t| FrameFeatures {
            motion: (0..4).map(|_| r.gen_range(-1.0..1.0)).collect(),
            object: PerHand::new(1 + (t % 4) as u16, 0),
        })
        .collect();
    (model, store, FeatureEpisode { id: 0, intention: 1, frames })
}

fn pattern(bits: usize) -> Vec<bool> {
    (0..T).map(|t| bits >> t & 1 == 1).collect()
}

fn flatten(g: &std::collections::BTreeMap<String, Vec<f64>>) -> Vec<f64> {
    g.iter().filter(|(k, _)| k.starts_with("policy.")).flat_map(|(_, v)| v.iter().copied()).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Probability, per-frame rewards and `∇ log π` terms of one pattern.
struct Enumerated {
    prob: f64,
    rewards: Vec<f64>,
    /// Gradient of `Σ_t w_t log π(a_t)` for the given weights.
    grad: Vec<f64>,
}

fn enumerate(model: &Anticipator, store: &mut ParamStore, ep: &FeatureEpisode, cfg: &TrainConfig, credit: Credit) -> Vec<Enumerated> {
    (0..1usize << T)
        .map(|bits| {
            let a = pattern(bits);
            let run = model.run_episode(store, ep, Gate::Triggered(TriggerRule::Fixed(&a))).unwrap();
            let prob: f64 = run.trace.probs.iter().zip(&a).map(|(&p, &x)| if x { p } else { 1.0 - p }).product();
            let rewards = episode_rewards(&run.probs, &a, ep.intention, cfg).rewards;
            let total: f64 = rewards.iter().sum();
            let weights: Vec<f64> = match credit {
                Credit::Sequence => vec![total; T],
                Credit::Frame => rewards.clone(),
            };
            let f = |tape: &mut Tape, s: &ParamStore| {
                let run = model.run_on_tape(tape, s, ep, Gate::Triggered(TriggerRule::Fixed(&a)))?;
                let terms: Vec<_> = run.log_pi.iter().zip(&weights).map(|(&v, &w)| (v, w)).collect();
                tape.weighted_sum(&terms)
            };
            let grad = flatten(&analytic_gradients(store, &f).unwrap());
            Enumerated { prob, rewards, grad }
        })
        .collect()
}

/// `Σ_a P(a) · g(a)`.
fn expectation(all: &[Enumerated]) -> Vec<f64> {
    let mut out = vec![0.0; all[0].grad.len()];
    for e in all {
        for (o, g) in out.iter_mut().zip(&e.grad) {
            *o += e.prob * g;
        }
    }
    out
}

/// Mean sampled policy-loss gradient, negated so it estimates an ascent
/// direction. Patterns are drawn from the policy first and then replayed
/// on a tape in chunks.
fn sampled(model: &Anticipator, store: &mut ParamStore, ep: &FeatureEpisode, cfg: &TrainConfig, credit: Credit, n: usize) -> Vec<f64> {
    let mut srng = rng::stream(99, &[credit as u64]);
    let draws: Vec<Vec<bool>> = (0..n)
        .map(|_| model.run_episode(store, ep, Gate::Triggered(TriggerRule::Sample(&mut srng))).unwrap().trace.actions)
        .collect();
    let chunks = draws.chunks(1000);
    let count = chunks.len() as f64;
    let mut acc: Vec<f64> = Vec::new();
    for chunk in chunks {
        let f = |tape: &mut Tape, s: &ParamStore| {
            let mut samples = Vec::with_capacity(chunk.len());
            for a in chunk {
                let run = model.run_on_tape(tape, s, ep, Gate::Triggered(TriggerRule::Fixed(a)))?;
                let probs: Vec<Vec<f64>> = run.probs.iter().map(|&p| tape.value(p).to_vec()).collect();
                let rewards = episode_rewards(&probs, a, ep.intention, cfg).rewards;
                samples.push(PolicySample { log_pi: run.log_pi, rewards });
            }
            policy_loss(tape, &samples, credit, cfg.baseline)
        };
        let g = flatten(&analytic_gradients(store, &f).unwrap());
        acc.resize(g.len(), 0.0);
        for (a, x) in acc.iter_mut().zip(&g) {
            *a -= x / count;
        }
    }
    acc
}

#[test]
fn enumeration_covers_a_distribution() {
    let (model, mut store, ep) = setup();
    let all = enumerate(&model, &mut store, &ep, &TrainConfig::default(), Credit::Sequence);
    assert_eq!(all.len(), 16);
    let total: f64 = all.iter().map(|e| e.prob).sum();
    assert!((total - 1.0).abs() < 1e-12);
    // The rewards must depend on the pattern, or the test is vacuous.
    let sums: Vec<f64> = all.iter().map(|e| e.rewards.iter().sum()).collect();
    let spread = sums.iter().cloned().fold(f64::MIN, f64::max) - sums.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 1.0, "{sums:?}");
}

#[test]
fn sampled_gradient_converges_to_the_enumerated_one() {
    let (model, mut store, ep) = setup();
    let cfg = TrainConfig::default();
    let exact = expectation(&enumerate(&model, &mut store, &ep, &cfg, Credit::Sequence));
    for baseline in [false, true] {
        let cfg = TrainConfig { baseline, ..cfg.clone() };
        let est = sampled(&model, &mut store, &ep, &cfg, Credit::Sequence, 20_000);
        let c = cosine(&est, &exact);
        assert!(c > 0.95, "baseline {baseline}: cosine {c}");
    }
}

#[test]
fn frame_credit_estimates_a_different_direction() {
    let cfg = TrainConfig::default();
    let mut cos = Vec::new();
    for seed in 0..12 {
        let (model, mut store, ep) = setup_seeded(seed);
        let exact = expectation(&enumerate(&model, &mut store, &ep, &cfg, Credit::Sequence));
        let frame = expectation(&enumerate(&model, &mut store, &ep, &cfg, Credit::Frame));
        cos.push(cosine(&frame, &exact));
    }
    assert!(cos.iter().any(|&c| c < 0.999), "{cos:?}");
}
