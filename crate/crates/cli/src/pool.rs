//! Stimulus pool directories: `pool.json` plus one PNG per endpoint.

use std::path::Path;

use hmix_core::elicit::{PoolPair, StimulusPool};
use hmix_core::hmix::PairInfo;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io;

pub const POOL_FORMAT: &str = "hmix-pool-v1";
pub const POOL_FILE: &str = "pool.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    #[serde(flatten)]
    pub info: PairInfo,
    /// Endpoint images relative to the pool directory.
    pub image_a: String,
    pub image_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolFile {
    pub format: String,
    pub class_names: Vec<String>,
    pub grid: Vec<f64>,
    pub pairs: Vec<PoolEntry>,
}

pub fn endpoint_path(id: &str) -> String {
    format!("endpoints/{}.png", io::file_stem_for(id))
}

/// Writes `pool.json` and the endpoint images.
pub fn write_pool(dir: &Path, pool: &StimulusPool, grid: &[f64]) -> Result<PoolFile> {
    let mut pairs = Vec::with_capacity(pool.len());
    for p in pool.pairs() {
        let a = endpoint_path(&p.info.endpoint_a_id);
        let b = endpoint_path(&p.info.endpoint_b_id);
        io::write_png(&dir.join(&a), &p.image_a)?;
        io::write_png(&dir.join(&b), &p.image_b)?;
        pairs.push(PoolEntry {
            info: p.info.clone(),
            image_a: a,
            image_b: b,
        });
    }
    let file = PoolFile {
        format: POOL_FORMAT.into(),
        class_names: pool.class_names().to_vec(),
        grid: grid.to_vec(),
        pairs,
    };
    io::write_json(&dir.join(POOL_FILE), &file)?;
    Ok(file)
}

pub fn read_pool_file(dir: &Path) -> Result<PoolFile> {
    let path = dir.join(POOL_FILE);
    let raw: serde_json::Value = io::read_json(&path)?;
    let format = raw.get("format").and_then(|f| f.as_str()).unwrap_or("missing");
    if format != POOL_FORMAT {
        return Err(CliError::Version {
            path,
            found: format.to_string(),
            expected: POOL_FORMAT.into(),
        });
    }
    serde_json::from_value(raw).map_err(|e| CliError::invalid(path.display(), e))
}

/// Loads a pool with its endpoint images.
pub fn load_pool(dir: &Path) -> Result<StimulusPool> {
    let file = read_pool_file(dir)?;
    let mut pairs = Vec::with_capacity(file.pairs.len());
    for e in file.pairs {
        pairs.push(PoolPair {
            image_a: io::read_png(&dir.join(&e.image_a))?,
            image_b: io::read_png(&dir.join(&e.image_b))?,
            info: e.info,
        });
    }
    StimulusPool::new(file.class_names, pairs).map_err(crate::error::from_core(dir.join(POOL_FILE)))
}
