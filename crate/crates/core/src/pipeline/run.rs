use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::{Checkpoint, CheckpointEntry, CheckpointHeader};
use super::{BatchOutput, MappingEngine, MappingRecord, RelationOutcome, RunInfo};
use crate::error::{io_err, PipelineError};
use crate::jsonl::{parse_lines, to_lines};
use crate::rerank::MappingOutcome;
use crate::retrieval::ExtractedRelation;
use crate::scalar::Scalar;

/// Output locations inside a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub results: PathBuf,
    pub edges: PathBuf,
    pub candidates: PathBuf,
    pub rejections: PathBuf,
    pub negations: PathBuf,
    pub report: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            results: dir.join("results.jsonl"),
            edges: dir.join("edges.jsonl"),
            candidates: dir.join("candidates.jsonl"),
            rejections: dir.join("rejections.jsonl"),
            negations: dir.join("negations.jsonl"),
            report: dir.join("report.json"),
            checkpoint: dir.join("checkpoint.jsonl"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Defaults to a name derived from the input digest.
    pub run_id: Option<String>,
    /// Defaults to the current time, truncated to seconds.
    pub started_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: RunStatus,
    pub run: RunInfo,
    pub total: usize,
    pub newly_processed: usize,
    pub reused: usize,
    pub report: Option<super::RunReport>,
}

/// Reads and validates a JSON-lines file of relations. Returns them with
/// the SHA-256 of the file contents.
pub fn read_relations(path: &Path) -> Result<(Vec<ExtractedRelation>, String), PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    let input_err = |line: usize, message: String| PipelineError::Input {
        path: path.display().to_string(),
        line,
        message,
    };
    let rows = parse_lines::<ExtractedRelation>(&text).map_err(|e| input_err(e.line, e.message))?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut relations = Vec::with_capacity(rows.len());
    for (line, rel) in rows {
        rel.validate().map_err(|e| input_err(line, e.to_string()))?;
        if !seen.insert(rel.relation_id.clone()) {
            return Err(input_err(line, format!("duplicate relation id `{}`", rel.relation_id)));
        }
        relations.push(rel);
    }
    Ok((relations, digest))
}

/// Maps every relation in `input`, checkpointing as it goes, and writes the
/// run outputs to `out_dir` once all relations are done.
///
/// Raising `stop` makes the run finish the relations in flight and return
/// `Interrupted`; a later call with `resume` set picks up from there.
pub fn run_mapping<S: Scalar>(
    engine: &MappingEngine<S>,
    input: &Path,
    out_dir: &Path,
    options: &RunOptions,
    stop: &AtomicBool,
) -> Result<RunSummary, PipelineError> {
    let (relations, input_digest) = read_relations(input)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = RunFiles::in_dir(out_dir);

    let mut header = CheckpointHeader {
        input_digest: input_digest.clone(),
        run_id: options
            .run_id
            .clone()
            .unwrap_or_else(|| format!("run-{}", &input_digest[..12])),
        started_at: options.started_at.unwrap_or_else(|| Utc::now().trunc_subsecs(0)),
        k: engine.k(),
        stores: engine.store_provenance(),
        chat_model_id: engine.chat().model_id().to_owned(),
    };

    let (checkpoint, mut done) = if files.checkpoint.exists() {
        if !options.resume {
            return Err(PipelineError::Config(format!(
                "{} already holds a run; resume it or choose another directory",
                out_dir.display()
            )));
        }
        let (cp, previous, entries) = Checkpoint::resume::<S>(&files.checkpoint)?;
        if let Some(reason) = previous.mismatch(&header) {
            return Err(PipelineError::Resume(reason));
        }
        if let Some(id) = options.run_id.as_ref().filter(|id| **id != previous.run_id) {
            return Err(PipelineError::Resume(format!(
                "run id `{id}` does not match checkpoint `{}`",
                previous.run_id
            )));
        }
        let ids: HashSet<&str> = relations.iter().map(|r| r.relation_id.as_str()).collect();
        if let Some(stray) = entries.keys().find(|id| !ids.contains(id.as_str())) {
            return Err(PipelineError::Resume(format!("checkpoint holds unknown relation `{stray}`")));
        }
        header = previous;
        (cp, entries)
    } else {
        (Checkpoint::create(&files.checkpoint, &header)?, Default::default())
    };

    let run = RunInfo {
        run_id: header.run_id.clone(),
        started_at: header.started_at,
    };
    let reused = done.len();
    let pending: Vec<ExtractedRelation> = relations
        .iter()
        .filter(|r| !done.contains_key(&r.relation_id))
        .cloned()
        .collect();
    log::info!(
        "run {}: {} relations, {} from checkpoint, {} to map",
        run.run_id,
        relations.len(),
        reused,
        pending.len()
    );

    let write_failure = std::sync::Mutex::new(None);
    let fresh = engine.map_each(&pending, &run, stop, &|_, outcome| {
        if let Err(e) = checkpoint.append(CheckpointEntry::from_outcome(outcome)) {
            write_failure.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(e);
        }
    });
    if let Some(e) = write_failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(e);
    }
    let mut newly_processed = 0;
    for outcome in fresh.into_iter().flatten() {
        newly_processed += 1;
        done.insert(outcome.result.relation_id.clone(), CheckpointEntry::from_outcome(&outcome));
    }

    if done.len() < relations.len() {
        return Ok(RunSummary {
            status: RunStatus::Interrupted,
            run,
            total: relations.len(),
            newly_processed,
            reused,
            report: None,
        });
    }

    let outcomes: Vec<RelationOutcome<S>> = relations
        .iter()
        .map(|r| done.remove(&r.relation_id).expect("every relation is done").into_outcome())
        .collect();
    let output = BatchOutput::new(outcomes);
    write_outputs(&files, &relations, &output)?;
    Ok(RunSummary {
        status: RunStatus::Completed,
        run,
        total: relations.len(),
        newly_processed,
        reused,
        report: Some(output.report),
    })
}

fn write_outputs<S: Scalar>(
    files: &RunFiles,
    relations: &[ExtractedRelation],
    output: &BatchOutput<S>,
) -> Result<(), PipelineError> {
    let records: Vec<MappingRecord> = relations
        .iter()
        .zip(output.results())
        .map(|(rel, res)| MappingRecord::new(rel, res))
        .collect();
    let rejections: Vec<&MappingRecord> = records
        .iter()
        .filter(|r| r.outcome == MappingOutcome::RejectedNone)
        .collect();
    let negations: Vec<_> = output.edges().filter(|e| e.negated).collect();

    let write = |path: &Path, contents: String| -> Result<(), PipelineError> {
        fs::write(path, contents).map_err(io_err(path))?;
        Ok(())
    };
    write(&files.results, to_lines(&records))?;
    write(&files.edges, to_lines(output.edges()))?;
    write(&files.candidates, to_lines(output.dumps()))?;
    write(&files.rejections, to_lines(rejections.iter().copied()))?;
    write(&files.negations, to_lines(negations.iter().copied()))?;
    let mut report = serde_json::to_string_pretty(&output.report).expect("report serializes");
    report.push('\n');
    write(&files.report, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.jsonl");
        fs::write(
            &path,
            "{\"id\":\"a\",\"subject\":\"s\",\"object\":\"o\",\"relation\":\"r\"}\n\n{\"id\":\"a\",\"subject\":\"s\",\"object\":\"o\",\"relation\":\"r\"}\n",
        )
        .unwrap();
        match read_relations(&path) {
            Err(PipelineError::Input { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_relation_text_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"subject\":\"s\",\"object\":\"o\",\"relation\":\"  \"}\n").unwrap();
        assert!(matches!(read_relations(&path), Err(PipelineError::Input { line: 1, .. })));
    }
}
