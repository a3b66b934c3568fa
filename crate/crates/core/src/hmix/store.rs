use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::format::{self, HEADER};
use super::record::{Judgment, PairInfo, Record, RecordKey, SoftLabelJudgment};

/// Outcome of a successful append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Appended {
    Stored,
    /// An identical record with the same key was already present.
    Duplicate,
}

/// An append-only set of H-Mix records, optionally mirrored to a log file.
///
/// Records keep insertion order. Appends go through `&mut self`; callers that
/// share a store across tasks wrap it in a mutex, which linearizes writers.
#[derive(Debug, Default)]
pub struct HmixStore {
    records: Vec<Record>,
    index: HashMap<RecordKey, usize>,
    log: Option<(PathBuf, BufWriter<File>)>,
}

impl PartialEq for HmixStore {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl HmixStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = Record>) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            store.append(r)?;
        }
        Ok(store)
    }

    /// Opens (or creates) a log-backed store. Existing records are loaded and
    /// every later append is written through and flushed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut store = if path.exists() && std::fs::metadata(path)?.len() > 0 {
            import_hmix(path)?
        } else {
            let mut f = File::create(path)?;
            writeln!(f, "{HEADER}")?;
            f.flush()?;
            Self::new()
        };
        let file = OpenOptions::new().append(true).open(path)?;
        store.log = Some((path.to_path_buf(), BufWriter::new(file)));
        Ok(store)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }

    /// Validates and appends `record`. Re-appending an identical record is a
    /// no-op; a different record under an existing key is a conflict.
    pub fn append(&mut self, record: Record) -> Result<Appended> {
        record.validate()?;
        let key = record.key();
        if let Some(&i) = self.index.get(&key) {
            return if self.records[i] == record {
                Ok(Appended::Duplicate)
            } else {
                Err(Error::Conflict(key.to_string()))
            };
        }
        if let Some((_, log)) = &mut self.log {
            writeln!(log, "{}", format::format_record(&record))?;
            log.flush()?;
        }
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(Appended::Stored)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &RecordKey) -> Option<&Record> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn pair(&self, pair_id: &str) -> Option<&PairInfo> {
        match self.get(&RecordKey::Pair(pair_id.to_string())) {
            Some(Record::Pair(p)) => Some(p),
            _ => None,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PairInfo> {
        self.records.iter().filter_map(|r| match r {
            Record::Pair(p) => Some(p),
            _ => None,
        })
    }

    pub fn judgments(&self) -> impl Iterator<Item = &Judgment> {
        self.records.iter().filter_map(|r| match r {
            Record::Judgment(j) => Some(j),
            _ => None,
        })
    }

    pub fn soft_labels(&self) -> impl Iterator<Item = &SoftLabelJudgment> {
        self.records.iter().filter_map(|r| match r {
            Record::SoftLabel(s) => Some(s),
            _ => None,
        })
    }

    /// Response records of one session plus the pairs they reference.
    pub fn session_records(&self, session_id: &str) -> Vec<Record> {
        let responses: Vec<&Record> = self
            .records
            .iter()
            .filter(|r| r.session_id() == Some(session_id))
            .collect();
        let mut pair_ids: Vec<&str> = responses
            .iter()
            .map(|r| match r {
                Record::Judgment(j) => j.stimulus.pair_id.as_str(),
                Record::SoftLabel(s) => s.stimulus.pair_id.as_str(),
                Record::Pair(p) => p.pair_id.as_str(),
            })
            .collect();
        pair_ids.sort_unstable();
        pair_ids.dedup();
        let pairs = pair_ids
            .into_iter()
            .filter_map(|id| self.pair(id).cloned().map(Record::Pair));
        pairs.chain(responses.into_iter().cloned()).collect()
    }
}

/// Writes every record of `store` to `path` in `hmix-v1` format.
pub fn export_hmix(store: &HmixStore, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    format::write_records(BufWriter::new(file), store.records())
}

/// Reads an `hmix-v1` file. Errors name the first offending line.
pub fn import_hmix(path: impl AsRef<Path>) -> Result<HmixStore> {
    let file = File::open(path)?;
    read_store(BufReader::new(file))
}

pub fn read_store<R: std::io::BufRead>(input: R) -> Result<HmixStore> {
    let mut store = HmixStore::new();
    for (line, record) in format::read_records(input)? {
        store.append(record).map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmix::record::{InterfaceKind, StimulusRef};

    fn judgment(trial: u32, lambda_h: f64) -> Record {
        Record::Judgment(Judgment {
            participant_id: "p".into(),
            session_id: "s".into(),
            trial_index: trial,
            stimulus: StimulusRef {
                pair_id: "pair-0".into(),
                lambda_f: 0.75,
            },
            interface: InterfaceKind::InferCoefficient,
            lambda_h,
            confidence: Some(0.6),
            repeat_of: None,
            response_ms: 10,
        })
    }

    #[test]
    fn append_is_idempotent_and_detects_conflicts() {
        let mut store = HmixStore::new();
        assert_eq!(store.append(judgment(0, 0.4)).unwrap(), Appended::Stored);
        assert_eq!(store.append(judgment(0, 0.4)).unwrap(), Appended::Duplicate);
        assert_eq!(store.len(), 1);
        assert!(matches!(
            store.append(judgment(0, 0.5)),
            Err(Error::Conflict(_))
        ));
    }

    #[test]
    fn invalid_records_are_rejected() {
        let mut store = HmixStore::new();
        let Record::Judgment(mut j) = judgment(0, 0.4) else {
            unreachable!()
        };
        j.confidence = Some(1.2);
        let err = store.append(Record::Judgment(j)).unwrap_err().to_string();
        assert!(err.contains("confidence"));
        assert!(store.is_empty());
    }

    #[test]
    fn log_backed_store_persists_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.hmix");
        {
            let mut store = HmixStore::open(&path).unwrap();
            store.append(judgment(0, 0.4)).unwrap();
            store.append(judgment(1, 0.45)).unwrap();
            store.append(judgment(1, 0.45)).unwrap();
        }
        let reopened = HmixStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.records()[1], judgment(1, 0.45));
    }

    #[test]
    fn empty_store_exports_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.hmix");
        export_hmix(&HmixStore::new(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "hmix-v1\n");
        assert!(import_hmix(&path).unwrap().is_empty());
    }

    #[test]
    fn duplicate_conflicts_in_files_report_the_line() {
        let text = "hmix-v1\n\
judgment\tp\ts\t0\tpair-0\t0.75\tinfer-coefficient\t0.4\t0.6\t-\t10\n\
judgment\tp\ts\t0\tpair-0\t0.75\tinfer-coefficient\t0.5\t0.6\t-\t10\n";
        match read_store(text.as_bytes()) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
