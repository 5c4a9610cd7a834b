//! On-disk layout: `index.json` maps session ids to their logs under
//! `sessions/`, and `stats/` holds recomputable stats records.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use jam_core::stats::StatsRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Log path relative to the data directory.
    pub log: PathBuf,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    sessions: BTreeMap<String, IndexEntry>,
}

pub struct Store {
    root: PathBuf,
    index: Mutex<Index>,
}

/// Writes via a temporary file and rename so readers never see half a file.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl Store {
    pub fn open(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("stats"))?;
        let index = match fs::read_to_string(root.join("index.json")) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(e),
        };
        Ok(Store {
            root: root.to_path_buf(),
            index: Mutex::new(index),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    pub fn stats_path(&self, id: &str) -> PathBuf {
        self.root.join("stats").join(format!("{id}.json"))
    }

    pub fn register(&self, id: &str, created_at: u64) -> io::Result<()> {
        let mut index = self.index.lock().expect("index lock");
        index.sessions.insert(
            id.to_string(),
            IndexEntry {
                log: PathBuf::from("sessions").join(format!("{id}.jsonl")),
                created_at,
            },
        );
        let text = serde_json::to_vec_pretty(&*index).map_err(io::Error::other)?;
        write_atomic(&self.root.join("index.json"), &text)
    }

    pub fn entries(&self) -> Vec<(String, IndexEntry)> {
        let index = self.index.lock().expect("index lock");
        index.sessions.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn resolve(&self, entry: &IndexEntry) -> PathBuf {
        self.root.join(&entry.log)
    }

    /// A cached stats record, if present and readable.
    pub fn cached_stats(&self, id: &str) -> Option<StatsRecord> {
        let text = fs::read_to_string(self.stats_path(id)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn cache_stats(&self, id: &str, stats: &StatsRecord) -> io::Result<()> {
        let text = serde_json::to_vec_pretty(stats).map_err(io::Error::other)?;
        write_atomic(&self.stats_path(id), &text)
    }
}
