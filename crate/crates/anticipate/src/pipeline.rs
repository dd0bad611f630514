//! The pipeline stages behind each subcommand. Every stage reads the
//! config and the files of earlier stages and writes its own outputs; no
//! stage keeps state in memory between invocations.

use std::fs;
use std::path::{Path, PathBuf};

use anticipate_core::anticipator::{extract_features, Anticipator, FeatureEpisode, ModelDims};
use anticipate_core::diff::ParamStore;
use anticipate_core::eval::{evaluate, sweep_threshold, EvalReport, Model, SweepRow};
use anticipate_core::motion::{evaluate_encoder, train_encoder, ClassAccuracy, Hand, MotionClass, MotionEncoder};
use anticipate_core::rng;
use anticipate_core::train::{init_policy, joint_train, pretrain_anticipator, EpochStats};
use anticipate_core::world::templates::labelled_windows;
use anticipate_core::world::{build_world, generate_dataset, split_dataset, EpisodeRecord};

use crate::checkpoint::{check_shapes, Checkpoint};
use crate::config::Config;
use crate::dataset::{read_jsonl, write_jsonl, RawEpisode};
use crate::error::{Error, Result};
use crate::report;
use crate::signals;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

pub mod stage {
    pub const GEN_DATA: &str = "gen-data";
    pub const PRETRAIN_MOTION: &str = "pretrain-motion";
    pub const PRETRAIN_RNN: &str = "pretrain-rnn";
    pub const TRAIN_JOINT: &str = "train-joint";
    pub const SWEEP: &str = "sweep";
}

/// Checkpoint file stems.
pub mod ckpt {
    pub const MOTION: &str = "motion";
    pub const PRETRAIN: &str = "pretrain";
    pub const JOINT: &str = "joint";
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSummary {
    pub episodes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub mean_len: f64,
}

pub fn gen_data(cfg: &Config) -> Result<DataSummary> {
    let world = build_world(&cfg.world_spec())?;
    let records = generate_dataset(&world, cfg.data.replicas)?;
    let mut r = rng::stream(cfg.split_seed(), &[]);
    let split = split_dataset(&records, |e| e.intention, cfg.data.split, &mut r)?;
    let world_path = cfg.paths.data.join("world.json");
    fs::create_dir_all(&cfg.paths.data).map_err(|e| Error::io(&cfg.paths.data, e))?;
    let json = serde_json::to_string_pretty(&world).map_err(|e| Error::format(&world_path, e))?;
    fs::write(&world_path, json + "\n").map_err(|e| Error::io(&world_path, e))?;
    for (name, part) in SPLITS.iter().zip([&split.train, &split.val, &split.test]) {
        write_jsonl(&cfg.data_file(name), part.iter())?;
        if cfg.data.raw_windows {
            let path = cfg.paths.data.join(format!("{name}_raw.jsonl"));
            write_jsonl(&path, part.iter().map(RawEpisode::from))?;
        }
    }
    let total: usize = records.iter().map(EpisodeRecord::len).sum();
    Ok(DataSummary {
        episodes: records.len(),
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        mean_len: total as f64 / records.len() as f64,
    })
}

pub fn load_split(cfg: &Config, name: &str) -> Result<Vec<EpisodeRecord>> {
    let path = cfg.data_file(name);
    if !path.exists() {
        return Err(Error::Missing { path, stage: stage::GEN_DATA });
    }
    read_jsonl(&path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSummary {
    pub losses: Vec<f64>,
    pub right: ClassAccuracy,
    pub left_flip: ClassAccuracy,
    pub left_no_flip: ClassAccuracy,
}

pub fn pretrain_motion(cfg: &Config) -> Result<MotionSummary> {
    let mcfg = cfg.motion_train_config();
    let noise = cfg.world.noise.accel_noise_sd;
    let encoder = MotionEncoder::default();
    let mut store = ParamStore::new();
    encoder.declare(&mut store, &mut rng::stream(mcfg.seed, &[0]))?;
    let train = labelled_windows(cfg.motion.windows_per_class, Hand::Right, noise, &mut rng::stream(mcfg.seed, &[1]));
    let losses = train_encoder(&encoder, &mut store, &train, &mcfg)?;
    let per_class = cfg.motion.eval_windows_per_class;
    let right = labelled_windows(per_class, Hand::Right, noise, &mut rng::stream(cfg.motion_eval_seed(), &[0]));
    let left = labelled_windows(per_class, Hand::Left, noise, &mut rng::stream(cfg.motion_eval_seed(), &[1]));
    let summary = MotionSummary {
        right: evaluate_encoder(&encoder, &store, &right, None)?,
        left_flip: evaluate_encoder(&encoder, &store, &left, cfg.motion.flip_channel.or(Some(0)))?,
        left_no_flip: evaluate_encoder(&encoder, &store, &left, None)?,
        losses,
    };
    Checkpoint::from_store(&store, mcfg.seed, &cfg.hash(), stage::PRETRAIN_MOTION)
        .save(&cfg.checkpoint_file(ckpt::MOTION))?;
    report::write_motion_log(&cfg.report_file("motion_log.csv"), &summary.losses)?;
    report::write_motion_accuracy(
        &cfg.report_file("motion_accuracy.csv"),
        &[
            ("right", &summary.right),
            ("left_flip", &summary.left_flip),
            ("left_no_flip", &summary.left_no_flip),
        ],
    )?;
    Ok(summary)
}

pub fn model_dims(cfg: &Config) -> ModelDims {
    ModelDims::new(cfg.world.n_intentions, cfg.world.n_objects, cfg.train.hidden)
}

/// Loads a checkpoint and checks it against the shapes the config implies.
/// `with` selects the parameter groups that must be present.
fn load_params(cfg: &Config, stem: &str, path: Option<&Path>, writer: &'static str, with: &[&str]) -> Result<ParamStore> {
    let path = path.map_or_else(|| cfg.checkpoint_file(stem), Path::to_path_buf);
    let ck = Checkpoint::load(&path, writer)?;
    if ck.config_hash != cfg.hash() {
        log::warn!("{} was written with a different configuration", path.display());
    }
    let store = ck.to_store()?;
    let mut reference = ParamStore::new();
    let mut r = rng::stream(0, &[]);
    MotionEncoder::default().declare(&mut reference, &mut r)?;
    let model = Anticipator::new(model_dims(cfg));
    if with.contains(&"rnn") {
        model.declare(&mut reference, &mut r)?;
    }
    if with.contains(&"policy") {
        model.policy().declare(&mut reference, &mut r)?;
    }
    check_shapes(&store, &reference, &path.display().to_string())?;
    Ok(store)
}

/// Checks that labels and tokens fit the configured model.
pub fn check_records(dims: &ModelDims, records: &[EpisodeRecord], what: &str) -> Result<()> {
    for r in records {
        if r.intention >= dims.n_intentions {
            return Err(Error::Mismatch(format!(
                "{what}: episode {} has intention {} but the model has {} outputs",
                r.episode_id, r.intention, dims.n_intentions
            )));
        }
        for f in &r.frames {
            let t = f.object.right.max(f.object.left) as usize;
            if t >= dims.n_objects {
                return Err(Error::Mismatch(format!(
                    "{what}: episode {} uses object token {t} but the model knows {} objects",
                    r.episode_id, dims.n_objects
                )));
            }
        }
    }
    Ok(())
}

/// Loads a split and runs the frozen motion encoder over it.
pub fn split_features(cfg: &Config, store: &ParamStore, name: &str) -> Result<Vec<FeatureEpisode>> {
    let records = load_split(cfg, name)?;
    check_records(&model_dims(cfg), &records, name)?;
    let encoder = MotionEncoder::default();
    records
        .iter()
        .map(|r| extract_features(&encoder, store, r, cfg.motion.flip_channel).map_err(Error::from))
        .collect()
}

fn log_epoch(tag: &str) -> impl FnMut(&EpochStats, &ParamStore) + '_ {
    move |s: &EpochStats, _: &ParamStore| {
        log::info!(
            "{tag} epoch {}: L^A {:.4} L^P {:.4} ratio {:.3} val {}",
            s.epoch,
            s.anticipation_loss,
            s.policy_loss,
            s.trigger_ratio,
            s.val_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"))
        )
    }
}

pub fn pretrain_rnn(cfg: &Config) -> Result<Vec<EpochStats>> {
    let mut store = load_params(cfg, ckpt::MOTION, None, stage::PRETRAIN_MOTION, &[])?;
    store.remove_prefix(Anticipator::PREFIX);
    store.remove_prefix(anticipate_core::policy::PolicyNet::PREFIX);
    let train = split_features(cfg, &store, "train")?;
    let val = split_features(cfg, &store, "val")?;
    let model = Anticipator::new(model_dims(cfg));
    let tcfg = cfg.train_config();
    let history = pretrain_anticipator(&model, &mut store, &train, &val, &tcfg, &mut log_epoch("pretrain"))?;
    report::write_training_log(&cfg.report_file("pretrain_log.csv"), &history)?;
    Checkpoint::from_store(&store, tcfg.seed, &cfg.hash(), stage::PRETRAIN_RNN)
        .save(&cfg.checkpoint_file(ckpt::PRETRAIN))?;
    Ok(history)
}

pub fn train_joint(cfg: &Config) -> Result<Vec<EpochStats>> {
    let mut store = load_params(cfg, ckpt::PRETRAIN, None, stage::PRETRAIN_RNN, &["rnn"])?;
    let train = split_features(cfg, &store, "train")?;
    let val = split_features(cfg, &store, "val")?;
    let model = Anticipator::new(model_dims(cfg));
    let tcfg = cfg.train_config();
    // The policy always starts from a fresh random initialisation.
    init_policy(&model, &mut store, tcfg.seed)?;
    let hash = cfg.hash();
    let every = cfg.checkpoint_every;
    let mut logger = log_epoch("joint");
    let mut saved = Ok(());
    let history = joint_train(&model, &mut store, &train, &val, &tcfg, &mut |s, store| {
        logger(s, store);
        if every > 0 && (s.epoch + 1) % every == 0 && saved.is_ok() {
            let path = cfg.checkpoint_file(&format!("{}_epoch{}", ckpt::JOINT, s.epoch + 1));
            saved = Checkpoint::from_store(store, tcfg.seed, &hash, stage::TRAIN_JOINT).save(&path);
        }
    })?;
    saved?;
    report::write_training_log(&cfg.report_file("joint_log.csv"), &history)?;
    Checkpoint::from_store(&store, tcfg.seed, &hash, stage::TRAIN_JOINT).save(&cfg.checkpoint_file(ckpt::JOINT))?;
    Ok(history)
}

fn trained_model(cfg: &Config, checkpoint: Option<&Path>) -> Result<(Anticipator, ParamStore)> {
    let store = load_params(cfg, ckpt::JOINT, checkpoint, stage::TRAIN_JOINT, &["rnn", "policy"])?;
    Ok((Anticipator::new(model_dims(cfg)), store))
}

pub fn eval(cfg: &Config, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let (model, store) = trained_model(cfg, checkpoint)?;
    let test = split_features(cfg, &store, "test")?;
    let m = Model { anticipator: &model, store: &store };
    let rep = evaluate(
        &m,
        &test,
        cfg.world.n_intentions,
        &cfg.eval.fractions,
        cfg.train.tau_eval,
        &cfg.eval.tau_grid,
    )?;
    report::write_eval(&cfg.paths.reports, &rep)?;
    Ok(rep)
}

pub fn sweep(cfg: &Config, checkpoint: Option<&Path>) -> Result<Vec<SweepRow>> {
    let (model, store) = trained_model(cfg, checkpoint)?;
    let test = split_features(cfg, &store, "test")?;
    let m = Model { anticipator: &model, store: &store };
    let rows = sweep_threshold(&m, &test, &cfg.eval.tau_grid)?;
    report::write_sweep(&cfg.report_file("sweep.csv"), &rows, test.len())?;
    Ok(rows)
}

/// Turns the sweep table into plot-ready series; returns the output path.
pub fn export(cfg: &Config, out: Option<&Path>) -> Result<PathBuf> {
    let input = cfg.report_file("sweep.csv");
    if !input.exists() {
        return Err(Error::Missing { path: input, stage: stage::SWEEP });
    }
    let rows = report::read_sweep(&input)?;
    let out = out.map_or_else(|| cfg.report_file("sweep_series.csv"), Path::to_path_buf);
    report::write_sweep_series(&out, &rows)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WindowPrediction {
    pub hand: Hand,
    pub window: usize,
    pub start_t: f64,
    pub class: MotionClass,
    pub confidence: f64,
}

/// Classifies every window of a raw signal file with the trained encoder.
pub fn classify(cfg: &Config, signals_path: &Path, out: Option<&Path>) -> Result<Vec<WindowPrediction>> {
    let store = load_params(cfg, ckpt::MOTION, None, stage::PRETRAIN_MOTION, &[])?;
    let rows = signals::read_signals(signals_path)?;
    let encoder = MotionEncoder::default();
    let mut preds = Vec::new();
    for w in signals::windows(&rows)? {
        let input = match (w.hand, cfg.motion.flip_channel) {
            (Hand::Left, Some(c)) => anticipate_core::motion::flip_left(&w.window, c)?,
            _ => w.window.clone(),
        };
        let post = encoder.posterior(&store, &input)?;
        let best = anticipate_core::math::argmax(&post);
        preds.push(WindowPrediction {
            hand: w.hand,
            window: w.index,
            start_t: w.start_t,
            class: MotionClass::ALL[best],
            confidence: post[best],
        });
    }
    let out = out.map_or_else(|| cfg.report_file("classify.csv"), Path::to_path_buf);
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(&out).map_err(|e| Error::format(&out, e))?;
    for p in &preds {
        w.serialize(p).map_err(|e| Error::format(&out, e))?;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    Ok(preds)
}
