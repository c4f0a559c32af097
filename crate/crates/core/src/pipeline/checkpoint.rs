use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{EdgeRecord, RelationOutcome, StoreProvenance};
use crate::error::{io_err, PipelineError};
use crate::rerank::MappingResult;
use crate::retrieval::CandidateDump;
use crate::scalar::Scalar;

/// First line of a checkpoint. A resumed run must match it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub input_digest: String,
    pub run_id: String,
    pub started_at: DateTime<Utc>,
    pub k: usize,
    pub stores: Vec<StoreProvenance>,
    pub chat_model_id: String,
}

impl CheckpointHeader {
    /// Describes the first field that differs from `other`, if any.
    /// `run_id` and `started_at` are carried over, not compared.
    pub fn mismatch(&self, other: &Self) -> Option<String> {
        if self.input_digest != other.input_digest {
            return Some(format!(
                "input digest {} does not match checkpoint {}",
                other.input_digest, self.input_digest
            ));
        }
        if self.k != other.k {
            return Some(format!("k={} does not match checkpoint k={}", other.k, self.k));
        }
        if self.stores != other.stores {
            return Some("store configuration differs from checkpoint".into());
        }
        if self.chat_model_id != other.chat_model_id {
            return Some(format!(
                "chat model `{}` does not match checkpoint `{}`",
                other.chat_model_id, self.chat_model_id
            ));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CheckpointEntry<S> {
    pub id: String,
    pub result: MappingResult,
    pub candidates: CandidateDump<S>,
    pub edge: Option<EdgeRecord>,
}

impl<S: Scalar> CheckpointEntry<S> {
    pub fn from_outcome(outcome: &RelationOutcome<S>) -> Self {
        Self {
            id: outcome.result.relation_id.clone(),
            result: outcome.result.clone(),
            candidates: outcome.candidates.clone(),
            edge: outcome.edge.clone(),
        }
    }

    pub fn into_outcome(self) -> RelationOutcome<S> {
        RelationOutcome {
            result: self.result,
            candidates: self.candidates,
            edge: self.edge,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "S: Scalar")]
enum Line<S> {
    Header(CheckpointHeader),
    Entry(Box<CheckpointEntry<S>>),
}

/// An open checkpoint, its header and the entries already recorded.
pub type Resumed<S> = (Checkpoint, CheckpointHeader, HashMap<String, CheckpointEntry<S>>);

/// Append-only log of completed relations.
#[derive(Debug)]
pub struct Checkpoint {
    path: PathBuf,
    file: Mutex<File>,
}

impl Checkpoint {
    /// Starts a new checkpoint at `path`, replacing any previous one.
    pub fn create(path: &Path, header: &CheckpointHeader) -> Result<Self, PipelineError> {
        let mut file = File::create(path).map_err(io_err(path))?;
        let line = serde_json::to_string(&Line::<f64>::Header(header.clone())).expect("header serializes");
        writeln!(file, "{line}").map_err(io_err(path))?;
        file.sync_data().map_err(io_err(path))?;
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    /// Reads an existing checkpoint and reopens it for appending.
    ///
    /// A final line without a newline is a write cut short and is dropped;
    /// any other unreadable line is an error.
    pub fn resume<S: Scalar>(path: &Path) -> Result<Resumed<S>, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
        if complete_len < text.len() {
            log::warn!("{}: dropping unterminated final line", path.display());
        }
        let complete = &text[..complete_len];
        let corrupt = |line: usize, msg: &str| {
            PipelineError::Resume(format!("{}: line {line}: {msg}", path.display()))
        };

        let mut header = None;
        let mut entries = HashMap::new();
        for (i, raw) in complete.lines().enumerate() {
            let line: Line<S> = serde_json::from_str(raw).map_err(|e| corrupt(i + 1, &e.to_string()))?;
            match (line, &header) {
                (Line::Header(h), None) if i == 0 => header = Some(h),
                (Line::Header(_), _) => return Err(corrupt(i + 1, "unexpected header")),
                (Line::Entry(_), None) => return Err(corrupt(i + 1, "missing header")),
                (Line::Entry(e), Some(_)) => {
                    if e.id != e.result.relation_id || e.id != e.candidates.id {
                        return Err(corrupt(i + 1, "entry ids disagree"));
                    }
                    let id = e.id.clone();
                    if entries.insert(id.clone(), *e).is_some() {
                        return Err(corrupt(i + 1, &format!("duplicate entry `{id}`")));
                    }
                }
            }
        }
        let header = header.ok_or_else(|| corrupt(1, "missing header"))?;

        let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        file.set_len(complete_len as u64).map_err(io_err(path))?;
        drop(file);
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok((
            Self {
                path: path.to_owned(),
                file: Mutex::new(file),
            },
            header,
            entries,
        ))
    }

    pub fn append<S: Scalar>(&self, entry: CheckpointEntry<S>) -> Result<(), PipelineError> {
        let line = serde_json::to_string(&Line::Entry(Box::new(entry))).expect("entry serializes");
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(file, "{line}").map_err(io_err(&self.path))?;
        file.flush().map_err(io_err(&self.path))?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
