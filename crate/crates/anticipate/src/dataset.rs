//! Episode files: one JSON record per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anticipate_core::motion::Hand;
use anticipate_core::world::EpisodeRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tick with raw windows, channel-major `[3 × 150]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    pub tick: usize,
    #[serde(rename = "accelL")]
    pub accel_l: Vec<f64>,
    #[serde(rename = "accelR")]
    pub accel_r: Vec<f64>,
    #[serde(rename = "objL")]
    pub obj_l: u16,
    #[serde(rename = "objR")]
    pub obj_r: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEpisode {
    pub episode_id: u64,
    pub intention: usize,
    pub sequence_id: usize,
    pub frames: Vec<RawFrame>,
}

impl From<&EpisodeRecord> for RawEpisode {
    fn from(r: &EpisodeRecord) -> Self {
        let frames = (0..r.len())
            .map(|i| RawFrame {
                tick: r.frames[i].tick,
                accel_l: r.window(i, Hand::Left).samples().to_vec(),
                accel_r: r.window(i, Hand::Right).samples().to_vec(),
                obj_l: r.frames[i].object.left,
                obj_r: r.frames[i].object.right,
            })
            .collect();
        Self {
            episode_id: r.episode_id,
            intention: r.intention,
            sequence_id: r.sequence_id,
            frames,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::format(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(item);
    }
    Ok(out)
}
