//! The run journal: an append-only log on rank 0 recording each completed
//! Process call with its global reduction value, so replay after recovery
//! skips finished calls and re-feeds their results deterministically.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calls::{CallKind, ReduceValue};
use crate::error::{EngineError, IoContext, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JournalRecord {
    pub ordinal: u64,
    pub kind: CallKind,
    /// Arrays the call wrote; their new checkpoint ID equals the ordinal.
    pub arrays: Vec<String>,
    pub reduction: ReduceValue,
}

pub struct Journal {
    path: PathBuf,
    file: File,
    records: Vec<JournalRecord>,
}

impl Journal {
    /// Open or create, replaying existing records. A torn tail record is
    /// ignored: the call it belonged to never committed.
    pub fn open(path: &Path) -> Result<Self> {
        let existing = if path.exists() {
            std::fs::read(path).io_ctx(format!("reading {}", path.display()))?
        } else {
            Vec::new()
        };
        let mut records = Vec::new();
        for payload in super::parse_records(&existing) {
            let rec: JournalRecord =
                serde_json::from_slice(payload).map_err(|e| EngineError::Corrupt {
                    path: path.to_path_buf(),
                    detail: format!("journal record parse error: {}", e),
                })?;
            if let Some(last) = records.last() {
                let last: &JournalRecord = last;
                if rec.ordinal <= last.ordinal {
                    return Err(EngineError::Corrupt {
                        path: path.to_path_buf(),
                        detail: "journal ordinals not strictly increasing".into(),
                    });
                }
            }
            records.push(rec);
        }
        let file = File::options()
            .create(true)
            .append(true)
            .open(path)
            .io_ctx(format!("opening {}", path.display()))?;
        Ok(Self { path: path.to_path_buf(), file, records })
    }

    pub fn append(&mut self, rec: JournalRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.ordinal <= last.ordinal {
                return Err(EngineError::State(format!(
                    "journal append out of order: {} after {}",
                    rec.ordinal, last.ordinal
                )));
            }
        }
        let payload = serde_json::to_vec(&rec)
            .map_err(|e| EngineError::State(format!("serializing journal record: {}", e)))?;
        self.file
            .write_all(&super::frame_record(&payload))
            .io_ctx(format!("appending to {}", self.path.display()))?;
        self.file.sync_data().io_ctx("syncing journal")?;
        self.records.push(rec);
        Ok(())
    }

    pub fn last_ordinal(&self) -> u64 {
        self.records.last().map(|r| r.ordinal).unwrap_or(0)
    }

    pub fn find(&self, ordinal: u64) -> Option<&JournalRecord> {
        self.records.iter().find(|r| r.ordinal == ordinal)
    }

    pub fn records(&self) -> &[JournalRecord] {
        &self.records
    }
}
