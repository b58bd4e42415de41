//! Append-only JSONL response store.
//!
//! `<store>` holds one [`ResponseRecord`] per line. `<store>.raw.jsonl`
//! holds every wire payload that arrived, written before it is parsed.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RecordKey, ResponseRecord};
use crate::prompting::Strategy;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt record at line {line} (byte offset {offset}): {message}")]
    Corrupt {
        path: String,
        line: usize,
        offset: u64,
        message: String,
    },
    #[error("no stored record for article `{}`, strategy {}, iteration {}", .0.article_id, .0.strategy, .0.iteration)]
    Missing(RecordKey),
}

/// One wire payload exactly as received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExchange {
    pub request_fingerprint: String,
    pub article_id: String,
    pub strategy: Strategy,
    pub iteration: u32,
    pub attempt: u32,
    pub status: u16,
    pub payload: String,
}

#[derive(Debug)]
pub struct ResponseStore {
    path: PathBuf,
    raw_path: PathBuf,
    files: Mutex<(File, File)>,
}

impl ResponseStore {
    /// Opens (creating if needed) the store and its raw-payload log.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let raw_path = raw_log_path(&path);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let open = |p: &Path| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| io_err(p, e))
        };
        let records = open(&path)?;
        let raw = open(&raw_path)?;
        Ok(ResponseStore {
            path,
            raw_path,
            files: Mutex::new((records, raw)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn raw_path(&self) -> &Path {
        &self.raw_path
    }

    pub fn append_raw(&self, raw: &RawExchange) -> Result<(), StoreError> {
        let line = to_line(raw);
        let mut files = self.files.lock().expect("store lock poisoned");
        files
            .1
            .write_all(line.as_bytes())
            .and_then(|_| files.1.flush())
            .map_err(|e| io_err(&self.raw_path, e))
    }

    pub fn append(&self, record: &ResponseRecord) -> Result<(), StoreError> {
        let line = to_line(record);
        let mut files = self.files.lock().expect("store lock poisoned");
        files
            .0
            .write_all(line.as_bytes())
            .and_then(|_| files.0.flush())
            .map_err(|e| io_err(&self.path, e))
    }

    pub fn load_index(&self) -> Result<StoreIndex, StoreError> {
        StoreIndex::load(&self.path)
    }
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("store entries serialize");
    line.push('\n');
    line
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn raw_log_path(store: &Path) -> PathBuf {
    let mut name = store.file_name().unwrap_or_default().to_os_string();
    name.push(".raw.jsonl");
    store.with_file_name(name)
}

/// Every record in a store, keyed by (article, strategy, iteration). When a
/// key repeats, the later line wins.
#[derive(Debug, Default, Clone)]
pub struct StoreIndex {
    records: Vec<ResponseRecord>,
    by_key: HashMap<RecordKey, usize>,
}

impl StoreIndex {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(io_err(path, e)),
        };
        let mut reader = BufReader::new(file);
        let mut index = StoreIndex::default();
        let mut offset = 0u64;
        let mut line_no = 0usize;
        let mut buf = String::new();
        loop {
            buf.clear();
            let read = reader.read_line(&mut buf).map_err(|e| io_err(path, e))?;
            if read == 0 {
                break;
            }
            line_no += 1;
            if !buf.trim().is_empty() {
                let record: ResponseRecord =
                    serde_json::from_str(&buf).map_err(|e| StoreError::Corrupt {
                        path: path.display().to_string(),
                        line: line_no,
                        offset,
                        message: e.to_string(),
                    })?;
                index.insert(record);
            }
            offset += read as u64;
        }
        Ok(index)
    }

    fn insert(&mut self, record: ResponseRecord) {
        let key = record.key();
        match self.by_key.get(&key) {
            Some(&slot) => self.records[slot] = record,
            None => {
                self.by_key.insert(key, self.records.len());
                self.records.push(record);
            }
        }
    }

    pub fn get(&self, key: &RecordKey) -> Option<&ResponseRecord> {
        self.by_key.get(key).map(|&i| &self.records[i])
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.by_key.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in first-stored order.
    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn for_strategy(&self, strategy: Strategy) -> impl Iterator<Item = &ResponseRecord> {
        self.records.iter().filter(move |r| r.strategy == strategy)
    }
}

/// Reads one record back from a store without touching the network.
pub fn replay(
    store_path: &Path,
    article_id: &str,
    strategy: Strategy,
    iteration: u32,
) -> Result<ResponseRecord, StoreError> {
    let key = RecordKey {
        article_id: article_id.to_string(),
        strategy,
        iteration,
    };
    let index = StoreIndex::load(store_path)?;
    index.get(&key).cloned().ok_or(StoreError::Missing(key))
}

pub fn load_raw_log(path: &Path) -> Result<Vec<RawExchange>, StoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if !line.trim().is_empty() {
            out.push(
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    offset,
                    message: e.to_string(),
                })?,
            );
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}
