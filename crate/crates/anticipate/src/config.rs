//! The single TOML document that drives every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use anticipate_core::diff::OptimizerKind;
use anticipate_core::motion::MotionTrainConfig;
use anticipate_core::rng::derive_seed;
use anticipate_core::train::TrainConfig;
use anticipate_core::world::WorldSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Rendered episodes per action sequence.
    pub replicas: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    /// Also write episodes with raw acceleration windows.
    pub raw_windows: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { replicas: 10, split: [0.8, 0.1, 0.1], raw_windows: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub optimizer: OptimizerKind,
    /// Training windows per class.
    pub windows_per_class: usize,
    /// Held-out windows per class and hand.
    pub eval_windows_per_class: usize,
    /// Negate this channel of left-hand windows; `None` disables flipping.
    pub flip_channel: Option<usize>,
}

impl Default for MotionConfig {
    fn default() -> Self {
        let m = MotionTrainConfig::default();
        Self {
            lr: m.lr,
            epochs: 3,
            batch_size: m.batch_size,
            grad_clip: m.grad_clip,
            optimizer: m.optimizer,
            windows_per_class: 200,
            eval_windows_per_class: 100,
            flip_channel: Some(anticipate_core::world::templates::MIRROR_CHANNEL),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub fractions: Vec<f64>,
    pub tau_grid: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            tau_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root of every random stream.
    pub seed: u64,
    pub world: WorldSpec,
    pub data: DataConfig,
    pub motion: MotionConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
    /// Save a joint-training checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

const MOTION_SEED: u64 = 1;
const TRAIN_SEED: u64 = 2;
const SPLIT_SEED: u64 = 3;
const EVAL_WINDOW_SEED: u64 = 4;

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.data, &mut cfg.paths.checkpoints, &mut cfg.paths.reports] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.world_spec().validate()?;
        self.train_config().validate()?;
        if self.data.replicas == 0 {
            return bad("data.replicas must be at least 1".into());
        }
        if self.eval.fractions.is_empty() {
            return bad("eval.fractions must not be empty".into());
        }
        if let Some(f) = self.eval.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("eval.fractions entry {f} outside (0, 1]"));
        }
        if let Some(t) = self.eval.tau_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("eval.tau_grid entry {t} outside [0, 1]"));
        }
        if let Some(c) = self.motion.flip_channel.filter(|&c| c >= anticipate_core::motion::CHANNELS) {
            return bad(format!("motion.flip_channel {c} out of range"));
        }
        if self.motion.windows_per_class == 0 || self.motion.eval_windows_per_class == 0 {
            return bad("motion window counts must be positive".into());
        }
        Ok(())
    }

    /// World spec with its seed taken from the root seed.
    pub fn world_spec(&self) -> WorldSpec {
        WorldSpec { rng_seed: self.seed, ..self.world.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, &[TRAIN_SEED]), ..self.train.clone() }
    }

    pub fn motion_train_config(&self) -> MotionTrainConfig {
        MotionTrainConfig {
            lr: self.motion.lr,
            epochs: self.motion.epochs,
            batch_size: self.motion.batch_size,
            grad_clip: self.motion.grad_clip,
            seed: derive_seed(self.seed, &[MOTION_SEED]),
            optimizer: self.motion.optimizer,
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &[SPLIT_SEED])
    }

    pub fn motion_eval_seed(&self) -> u64 {
        derive_seed(self.seed, &[EVAL_WINDOW_SEED])
    }

    /// SHA-256 over the settings that determine model contents; paths are
    /// excluded so that moving a run does not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn data_file(&self, split: &str) -> PathBuf {
        self.paths.data.join(format!("{split}.jsonl"))
    }

    pub fn checkpoint_file(&self, stage: &str) -> PathBuf {
        self.paths.checkpoints.join(format!("{stage}.json"))
    }

    pub fn report_file(&self, name: &str) -> PathBuf {
        self.paths.reports.join(name)
    }
}
