use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Written as `manifest.json` in every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the resolved options, excluding the output location.
    pub config_hash: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    /// Relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex(&hasher.finalize()), total))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &Value) -> String {
    let mut c = config.clone();
    if let Value::Object(map) = &mut c {
        map.remove("out");
    }
    hex(&Sha256::digest(serde_json::to_vec(&c).expect("JSON value serializes")))
}

/// Digests of every file under `path` (or of `path` itself), sorted by path.
fn digest_tree(path: &Path, relative_to: Option<&Path>) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let p = e.path().unwrap_or(path).to_path_buf();
            CliError::io(&p, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = match relative_to {
            Some(base) => entry.path().strip_prefix(base).unwrap_or(entry.path()),
            None => entry.path(),
        };
        if relative_to.is_some() && name == Path::new(MANIFEST_FILE) {
            continue;
        }
        let (sha256, bytes) = sha256_file(entry.path())?;
        out.push(FileDigest {
            path: name.to_string_lossy().replace('\\', "/"),
            sha256,
            bytes,
        });
    }
    Ok(out)
}

/// Collects what a command read, then records what it wrote.
pub struct RunRecorder {
    command: String,
    config: Value,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    started_at: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunRecorder {
    pub fn start(command: &str, config: Value) -> Self {
        RunRecorder {
            command: command.to_string(),
            config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            started_at: now(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn seeds(&mut self, seeds: impl IntoIterator<Item = u64>) {
        self.seeds.extend(seeds);
    }

    /// Hashes inputs and outputs and writes the manifest into `out_dir`.
    pub fn finish(self, out_dir: &Path) -> Result<RunManifest> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.extend(digest_tree(p, None)?);
        }
        let manifest = RunManifest {
            tool: "hmix".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: config_hash(&self.config),
            config: self.config,
            seeds: self.seeds,
            inputs,
            outputs: digest_tree(out_dir, Some(out_dir))?,
            started_at: self.started_at,
            finished_at: now(),
        };
        crate::io::write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    crate::io::read_json(&dir.join(MANIFEST_FILE))
}
