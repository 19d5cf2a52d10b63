//! Line-delimited commit dataset: one JSON record per line.
//!
//! Fields: id, label (0/1, optional), message, diff (unified format),
//! optional project tag and pre/post source maps keyed by file path.
//! Unknown fields are ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{parse_unified_diff, Commit};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record at line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub message: String,
    pub diff: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pre_sources: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub post_sources: BTreeMap<String, String>,
}

impl CommitRecord {
    pub fn into_commit(self, line: usize) -> Result<Commit, DatasetError> {
        let bad = |reason: String| DatasetError::BadRecord { line, reason };
        if self.id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(bad(format!("label must be 0 or 1, got {l}")));
            }
        }
        let mut files = parse_unified_diff(&self.diff)
            .map_err(|e| bad(format!("unparsable diff: {e}")))?;
        for f in &mut files {
            f.pre_source = self.pre_sources.get(&f.path).cloned();
            f.post_source = self.post_sources.get(&f.path).cloned();
        }
        Ok(Commit {
            id: self.id,
            message: self.message,
            files,
            label: self.label,
            project: self.project,
        })
    }
}

/// Load a line-delimited dataset, failing fast on the first bad record.
pub fn load_dataset(path: &Path) -> Result<Vec<Commit>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut commits = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CommitRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::BadRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        commits.push(record.into_commit(line_no)?);
    }
    Ok(commits)
}

/// Write records as one JSON object per line.
pub fn save_records(path: &Path, records: &[CommitRecord]) -> Result<(), DatasetError> {
    let mut file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(file, "{line}").map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}
