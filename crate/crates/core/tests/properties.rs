use anticipate_core::anticipator::{Anticipator, FeatureEpisode, FrameFeatures, Gate, ModelDims, TriggerRule};
use anticipate_core::diff::{analytic_gradients, sgd_step, Init, ParamStore, Tape};
use anticipate_core::motion::{flip_left, AccelWindow, Hand, MotionEncoder, PerHand, CHANNELS, WINDOW_LEN};
use anticipate_core::policy::{sample_action, threshold_action};
use anticipate_core::rng;
use anticipate_core::train::{anticipation_weight, episode_rewards, reward, TrainConfig, TriggerCount};
use anticipate_core::world::{observed_frames, split_dataset};
use proptest::prelude::*;

fn small_model() -> (Anticipator, ParamStore) {
    let model = Anticipator::new(ModelDims {
        n_intentions: 4,
        n_objects: 6,
        motion_dim: 2,
        object_dim: 3,
        embed_dim: 5,
        hidden: 4,
        policy_hidden: [5, 3],
    });
    let mut store = ParamStore::new();
    let mut r = rng::stream(17, &[]);
    model.declare(&mut store, &mut r).unwrap();
    model.policy().declare(&mut store, &mut r).unwrap();
    (model, store)
}

fn frames() -> impl Strategy<Value = Vec<FrameFeatures>> {
    prop::collection::vec(
        (prop::collection::vec(-2.0..2.0f64, 4), 0u16..6, 0u16..6)
            .prop_map(|(motion, r, l)| FrameFeatures { motion, object: PerHand::new(r, l) }),
        1..9,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_normalises_and_log_softmax_is_finite(z in prop::collection::vec(-50.0..50.0f64, 1..40)) {
        let mut tape = Tape::new();
        let x = tape.vector(&z);
        let p = tape.softmax(x);
        let sum: f64 = tape.value(p).iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let lp = tape.log(p, 0.0);
        prop_assert!(tape.value(lp).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backward_is_linear(seed in 0u64..1000, a in 0usize..4, b in 0usize..4) {
        let mut store = ParamStore::new();
        store.declare("w", &[4, 3], Init::FanIn, &mut rng::stream(seed, &[])).unwrap();
        let x = [0.3, -1.2, 0.7];
        let loss = |pick: Option<usize>| move |tape: &mut Tape, s: &ParamStore| {
            let w = tape.param(s, "w")?;
            let xv = tape.vector(&x);
            let y = tape.matmul(w, xv)?;
            let p = tape.softmax(y);
            let la = tape.pick(p, a)?;
            let la = tape.log(la, 0.0);
            let lb = tape.pick(y, b)?;
            let lb = tape.tanh(lb);
            match pick {
                Some(0) => Ok(la),
                Some(_) => Ok(lb),
                None => tape.weighted_sum(&[(la, 1.0), (lb, 1.0)]),
            }
        };
        let ga = analytic_gradients(&mut store, &loss(Some(0))).unwrap();
        let gb = analytic_gradients(&mut store, &loss(Some(1))).unwrap();
        let gs = analytic_gradients(&mut store, &loss(None)).unwrap();
        for i in 0..12 {
            prop_assert!((gs["w"][i] - ga["w"][i] - gb["w"][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_with_zero_rate_keeps_values(seed in 0u64..1000) {
        let mut store = ParamStore::new();
        store.declare("w", &[3, 5], Init::FanIn, &mut rng::stream(seed, &[])).unwrap();
        for g in store.grads_mut("w").unwrap() {
            *g = 0.25;
        }
        let before = store.clone();
        sgd_step(&mut store, 0.0).unwrap();
        prop_assert_eq!(store.get("w").unwrap().values(), before.get("w").unwrap().values());
    }

    #[test]
    fn flip_is_an_involution(seed in 0u64..1000, channel in 0usize..CHANNELS) {
        use rand::Rng;
        let mut r = rng::stream(seed, &[]);
        let samples: Vec<f64> = (0..CHANNELS * WINDOW_LEN).map(|_| r.gen_range(-4.0..4.0)).collect();
        let w = AccelWindow::new(samples, Hand::Left).unwrap();
        let once = flip_left(&w, channel).unwrap();
        prop_assert_eq!(once.samples().len(), w.samples().len());
        let back = AccelWindow::new(once.samples().to_vec(), Hand::Left).unwrap();
        let twice = flip_left(&back, channel).unwrap();
        prop_assert_eq!(twice.samples(), w.samples());
    }

    #[test]
    fn anticipation_weight_increases(t in 0usize..200, horizon in 1usize..200) {
        prop_assume!(t < horizon);
        let h = horizon as f64;
        prop_assert!(anticipation_weight(t as f64, h) < anticipation_weight(t as f64 + 1.0, h));
        prop_assert_eq!(anticipation_weight(h, h), 1.0);
        prop_assert_eq!(anticipation_weight(0.0, h), 0.1);
    }

    #[test]
    fn reward_sign_follows_correctness(
        p in prop::collection::vec(0.0..1.0f64, 4),
        y_t in 0usize..4,
        y_gt in 0usize..4,
        horizon in 1usize..30,
        n_frac in 0.0..=1.0f64,
        prefix in any::<bool>(),
    ) {
        let n = (n_frac * horizon as f64) as usize;
        let cfg = TrainConfig {
            trigger_count: if prefix { TriggerCount::Prefix } else { TriggerCount::Episode },
            ..TrainConfig::default()
        };
        let r = reward(&p, y_t, y_gt, n, horizon, &cfg);
        if y_t == y_gt {
            prop_assert!(r >= 0.0);
        } else {
            prop_assert!(r <= 0.0);
        }
    }

    #[test]
    fn episode_rewards_count_triggers(actions in prop::collection::vec(any::<bool>(), 1..12)) {
        let probs = vec![vec![0.5, 0.3, 0.2]; actions.len()];
        let rec = episode_rewards(&probs, &actions, 0, &TrainConfig::default());
        prop_assert_eq!(rec.n, actions.iter().filter(|&&a| a).count());
        prop_assert_eq!(rec.rewards.len(), actions.len());
        prop_assert!(rec.rewards.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn prediction_is_causal(frames in frames(), cut in 1usize..9) {
        let (model, store) = small_model();
        let full = FeatureEpisode { id: 0, intention: 1, frames: frames.clone() };
        let cut = cut.min(frames.len());
        let prefix = FeatureEpisode { id: 0, intention: 1, frames: frames[..cut].to_vec() };
        let a = model.run_episode(&store, &full, Gate::Triggered(TriggerRule::Threshold(0.5))).unwrap();
        let b = model.run_episode(&store, &prefix, Gate::Triggered(TriggerRule::Threshold(0.5))).unwrap();
        prop_assert_eq!(&a.probs[..cut], &b.probs[..]);
        prop_assert_eq!(&a.trace.actions[..cut], &b.trace.actions[..]);
    }

    #[test]
    fn unread_object_tokens_do_not_matter(frames in frames(), actions in prop::collection::vec(any::<bool>(), 8)) {
        let (model, store) = small_model();
        let actions = &actions[..frames.len()];
        let ep = FeatureEpisode { id: 0, intention: 0, frames };
        let mut changed = ep.clone();
        for t in 0..ep.len() {
            if t == 0 || !actions[t - 1] {
                changed.frames[t].object = PerHand::new(5, 4);
            }
        }
        let a = model.run_episode(&store, &ep, Gate::Triggered(TriggerRule::Fixed(actions))).unwrap();
        let b = model.run_episode(&store, &changed, Gate::Triggered(TriggerRule::Fixed(actions))).unwrap();
        prop_assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn trigger_ratio_is_a_fraction(frames in frames(), tau in 0.0..=1.0f64) {
        let (model, store) = small_model();
        let ep = FeatureEpisode { id: 0, intention: 0, frames };
        let run = model.run_episode(&store, &ep, Gate::Triggered(TriggerRule::Threshold(tau))).unwrap();
        prop_assert!((0.0..=1.0).contains(&run.trace.ratio));
        prop_assert!(run.probs.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn first_decision_is_monotone_in_tau(frames in frames(), lo in 0.0..=1.0f64, hi in 0.0..=1.0f64) {
        let (model, store) = small_model();
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let ep = FeatureEpisode { id: 0, intention: 0, frames };
        let a = model.run_episode(&store, &ep, Gate::Triggered(TriggerRule::Threshold(lo))).unwrap();
        let b = model.run_episode(&store, &ep, Gate::Triggered(TriggerRule::Threshold(hi))).unwrap();
        // Up to the first frame where the two runs decide differently they
        // share every input, so the higher threshold can only trigger less.
        if let Some(t) = a.trace.actions.iter().zip(&b.trace.actions).position(|(x, y)| x != y) {
            prop_assert!(a.trace.actions[t] && !b.trace.actions[t]);
        }
    }

    #[test]
    fn decision_rules_agree_at_the_limits(seed in 0u64..1000, tau in 0.0..1.0f64) {
        let mut r = rng::stream(seed, &[]);
        prop_assert!(!sample_action(0.0, &mut r));
        prop_assert!(!threshold_action(0.0, tau));
        prop_assert!(sample_action(1.0, &mut r));
        prop_assert!(threshold_action(1.0, tau));
    }

    #[test]
    fn observed_frames_stay_in_range(f in 0.001..=1.0f64, total in 1usize..500) {
        let n = observed_frames(f, total);
        prop_assert!((1..=total).contains(&n));
        prop_assert!(n as f64 >= f * total as f64 - 1e-9);
        prop_assert_eq!(observed_frames(1.0, total), total);
    }

    #[test]
    fn split_is_a_stratified_partition(per_label in 10usize..30, labels in 1usize..6, seed in 0u64..100) {
        let items: Vec<(usize, usize)> = (0..labels * per_label).map(|i| (i, i % labels)).collect();
        let s = split_dataset(&items, |x| x.1, [0.8, 0.1, 0.1], &mut rng::stream(seed, &[])).unwrap();
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).map(|x| x.0).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..items.len()).collect::<Vec<_>>());
        for part in [&s.train, &s.val, &s.test] {
            for l in 0..labels {
                prop_assert!(part.iter().any(|x| x.1 == l));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn encoder_posterior_is_normalised(seed in 0u64..1000) {
        use rand::Rng;
        let enc = MotionEncoder::default();
        let mut store = ParamStore::new();
        enc.declare(&mut store, &mut rng::stream(1, &[])).unwrap();
        let mut r = rng::stream(seed, &[]);
        let samples: Vec<f64> = (0..CHANNELS * WINDOW_LEN).map(|_| r.gen_range(-16.0..16.0)).collect();
        let w = AccelWindow::new(samples, Hand::Right).unwrap();
        let p = enc.posterior(&store, &w).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(p, enc.posterior(&store, &w).unwrap());
    }
}
