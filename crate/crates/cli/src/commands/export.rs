use std::io::Write;
use std::path::Path;

use hmix_core::hmix::{import_hmix, write_records, Record};

use crate::cli::{ExportArgs, ExportFormat};
use crate::config::{output_path, require, resolve};
use crate::error::{from_core, CliError, Result};
use crate::io;

/// Response log and session plans inside a service state directory.
pub const STORE_FILE: &str = "responses.hmix";
pub const SESSIONS_DIR: &str = "sessions";

pub fn run(args: &ExportArgs, config: Option<&Path>) -> Result<()> {
    let (a, _) = resolve("export", args, config, &[])?;
    let state = require(a.state.clone(), "state")?;
    let log = state.join(STORE_FILE);
    if !log.is_file() {
        return Err(CliError::Missing(log));
    }
    let store = import_hmix(&log).map_err(from_core(&log))?;
    let records: Vec<Record> = match &a.session {
        Some(id) => {
            if !state.join(SESSIONS_DIR).join(format!("{id}.json")).is_file() {
                return Err(CliError::Missing(state.join(SESSIONS_DIR).join(format!("{id}.json"))));
            }
            store.session_records(id)
        }
        None => store.records().to_vec(),
    };
    let mut buf = Vec::new();
    match a.format.unwrap_or(ExportFormat::Hmix) {
        ExportFormat::Hmix => write_records(&mut buf, &records).map_err(from_core(&log))?,
        ExportFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, &records).expect("records serialize");
            buf.push(b'\n');
        }
    }
    match &a.out {
        Some(p) => {
            let p = output_path(p);
            io::write_bytes(&p, &buf)?;
            eprintln!("{} records written to {}", records.len(), p.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&buf)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(())
}
