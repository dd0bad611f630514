//! Versioned JSON checkpoints: parameter name → shape + flat values.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anticipate_core::diff::ParamStore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub rng_seed: u64,
    pub config_hash: String,
    /// Pipeline stage that wrote the file.
    pub stage: String,
    pub params: BTreeMap<String, ParamEntry>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, rng_seed: u64, config_hash: &str, stage: &str) -> Self {
        let params = store
            .iter()
            .map(|(name, p)| {
                (name.to_string(), ParamEntry { shape: p.shape().to_vec(), values: p.values().to_vec() })
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            rng_seed,
            config_hash: config_hash.to_string(),
            stage: stage.to_string(),
            params,
        }
    }

    pub fn to_store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, p) in &self.params {
            store.insert(name, &p.shape, p.values.clone())?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::format(path, e))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint; a missing file names the stage that writes it.
    pub fn load(path: &Path, stage: &'static str) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing { path: path.to_path_buf(), stage });
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("format_version {} (expected {FORMAT_VERSION})", ck.format_version),
            ));
        }
        Ok(ck)
    }
}

/// Checks that every parameter of `reference` exists in `store` with the
/// same shape.
pub fn check_shapes(store: &ParamStore, reference: &ParamStore, what: &str) -> Result<()> {
    for (name, p) in reference.iter() {
        match store.get(name) {
            Ok(q) if q.shape() == p.shape() => {}
            Ok(q) => {
                return Err(Error::Mismatch(format!(
                    "{what}: `{name}` has shape {:?}, configuration expects {:?}",
                    q.shape(),
                    p.shape()
                )))
            }
            Err(_) => return Err(Error::Mismatch(format!("{what}: parameter `{name}` is missing"))),
        }
    }
    Ok(())
}
