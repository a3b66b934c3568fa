//! TOML configuration files.
//!
//! A config file carries `config_version = 1` and one table per subcommand.
//! Keys in a table are the long flag names of that subcommand with dashes
//! turned into underscores; a flag given on the command line wins over the
//! same key in the file.

use std::path::{Path, PathBuf};

use clap::CommandFactory;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::cli::Cli;
use crate::error::{CliError, Result};

pub const CONFIG_VERSION: i64 = 1;
pub const OUTPUT_ROOT_ENV: &str = "HMIX_OUTPUT_ROOT";

/// Reads the table for `command`; an absent table is empty.
pub fn load_section(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::invalid(path.display(), e.message()))?;
    match doc.get("config_version") {
        Some(toml::Value::Integer(CONFIG_VERSION)) => {}
        found => {
            return Err(CliError::Version {
                path: path.to_path_buf(),
                found: found.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                expected: CONFIG_VERSION.to_string(),
            })
        }
    }
    let section = match doc.remove(command) {
        None => return Ok(Map::new()),
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(CliError::invalid(path.display(), format!("`{command}` must be a table"))),
    };
    let value = serde_json::to_value(section).map_err(|e| CliError::invalid(path.display(), e))?;
    let Value::Object(map) = value else {
        unreachable!("a TOML table converts to a JSON object")
    };
    Ok(map)
}

fn known_keys(command: &str) -> Vec<String> {
    let cmd = Cli::command();
    cmd.find_subcommand(command)
        .map(|sub| sub.get_arguments().map(|a| a.get_id().to_string()).collect())
        .unwrap_or_default()
}

/// Overlays command-line options on the config table and decodes the result.
///
/// `extra_keys` are config-only keys that have no flag.
pub fn resolve<T>(command: &str, cli: &T, config: Option<&Path>, extra_keys: &[&str]) -> Result<(T, Value)>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match config {
        Some(path) => {
            let section = load_section(path, command)?;
            let known = known_keys(command);
            if let Some(bad) = section
                .keys()
                .find(|k| !known.iter().any(|n| n == *k) && !extra_keys.contains(&k.as_str()))
            {
                return Err(CliError::invalid(
                    path.display(),
                    format!("unknown key `{bad}` in [{command}]"),
                ));
            }
            section
        }
        None => Map::new(),
    };
    let Value::Object(given) = serde_json::to_value(cli).expect("options serialize") else {
        unreachable!("options are structs")
    };
    for (k, v) in given {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    let merged = Value::Object(merged);
    let opts = serde_json::from_value(merged.clone())
        .map_err(|e| CliError::invalid(format!("[{command}] options"), e))?;
    Ok((opts, merged))
}

/// Relative output paths land under `$HMIX_OUTPUT_ROOT` when it is set.
pub fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if p.is_relative() && !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

pub fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing `--{}` (or `{key}` in the config file)", key.replace('_', "-"))))
}
