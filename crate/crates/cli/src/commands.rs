use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use chrono::{SubsecRound, Utc};
use predmap_core::config::RunConfig;
use predmap_core::evaluation::{candidate_lists, evaluate, GoldPair};
use predmap_core::jsonl::parse_lines;
use predmap_core::ontology::{Ontology, PredicateCatalog};
use predmap_core::pipeline::{self, run_mapping, MappingRecord, RunFiles, RunStatus};
use predmap_core::{CatalogError, Dump, EvalError, PipelineError};
use serde::de::DeserializeOwned;

/// Usage and configuration problems exit with 2, everything else with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Failure::Runtime(err)
    }
}

impl From<PipelineError> for Failure {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::Config(_)
            | PipelineError::Resume(_)
            | PipelineError::Input { .. }
            | PipelineError::Catalog(CatalogError::Parse { .. } | CatalogError::Integrity(_)) => {
                Failure::Usage(err.to_string())
            }
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Io { .. } => Failure::Runtime(err.into()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn require_file(flag: &str, path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{flag}: no such file: {}", path.display())))
    }
}

fn require_dir(flag: &str, path: &Path) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{flag}: no such directory: {}", path.display())))
    }
}

fn load_config(flag: &str, path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    require_file(flag, path)?;
    let mut config = RunConfig::load(path).map_err(|e| Failure::Usage(format!("{flag}: {e}")))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn parse_ontology(name: &str) -> Result<Ontology, Failure> {
    serde_json::from_value(serde_json::Value::String(name.to_lowercase()))
        .map_err(|_| Failure::Usage(format!("--ontology: unknown ontology `{name}` (chemprot, biolink, custom)")))
}

/// The `ontology` field of a catalog file, if it has one.
fn declared_ontology(path: &Path) -> Option<Ontology> {
    let text = fs::read_to_string(path).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(value.get("ontology")?.clone()).ok()
}

pub fn preprocess(catalog: &Path, out: &Path, providers: &Path, ontology: Option<&str>, seed: Option<u64>) -> Outcome {
    require_file("--catalog", catalog)?;
    let config = load_config("--providers", providers, seed)?;
    let ontology = match ontology {
        Some(name) => parse_ontology(name)?,
        None => config
            .ontology
            .or_else(|| declared_ontology(catalog))
            .ok_or_else(|| Failure::Usage("--ontology: not given and the catalog does not declare one".into()))?,
    };
    let parsed = PredicateCatalog::parse_file(catalog, ontology).map_err(PipelineError::from)?;
    let targets = config.store_targets(out)?;
    let chat = config.negation_client()?;
    let created_at = config.started_at.unwrap_or_else(|| Utc::now().trunc_subsecs(0));

    let summary = pipeline::preprocess::<f64>(&parsed, &chat, &targets, out, created_at)?;
    println!(
        "catalog: {} predicates, {} descriptors ({} negations added, {} skipped)",
        summary.catalog.predicates.len(),
        summary.catalog.descriptors.len(),
        summary.negations_added,
        summary.negation_skips.len()
    );
    for store in &summary.stores {
        println!(
            "{} store: {} records, dim {}, model {} -> {}",
            store.role,
            store.manifest.record_count,
            store.manifest.dim,
            store.manifest.model_id,
            store.dir.display()
        );
        if !store.degenerate.is_empty() {
            println!("  {} descriptors had zero-norm embeddings and were dropped", store.degenerate.len());
        }
    }
    Ok(())
}

pub fn map(config_path: &Path, input: &Path, out: &Path, resume: bool, seed: Option<u64>) -> Outcome {
    let config = load_config("--config", config_path, seed)?;
    require_file("--input", input)?;
    for role in config.roles() {
        if config.store(role).and_then(|s| s.path.as_ref()).is_none() {
            return Err(Failure::Usage(format!(
                "--config: stores.{role}.path must point at a store built by `preprocess`"
            )));
        }
    }
    let engine = config.build_engine::<f64>(Path::new(""))?;

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("stopping after in-flight relations; press Ctrl-C again to abort");
    })
    .context("installing the interrupt handler")?;

    let summary = run_mapping(&engine, input, out, &config.run_options(resume), &stop)?;
    match (summary.status, summary.report) {
        (RunStatus::Completed, Some(report)) => {
            println!(
                "{}: {} relations ({} new, {} from checkpoint)",
                summary.run.run_id, summary.total, summary.newly_processed, summary.reused
            );
            println!(
                "mapped {} (negated {}), rejected {}, invalid {}, parse failures {}",
                report.mapped,
                report.negated_count,
                report.rejected_none,
                report.invalid_selections,
                report.parse_failures
            );
            println!("rejection rate {:.4}%", report.rejection_rate * 100.0);
            Ok(())
        }
        _ => Err(Failure::Runtime(anyhow!(
            "interrupted after {} of {} relations; rerun with --resume to continue",
            summary.newly_processed + summary.reused,
            summary.total
        ))),
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = parse_lines(&text).map_err(|e| EvalError::Schema {
        path: path.display().to_string(),
        line: e.line,
        message: e.message,
    })?;
    Ok(rows.into_iter().map(|(_, row)| row).collect())
}

pub fn eval(results: &Path, gold: &Path, ks: &[usize], out: Option<&Path>) -> Outcome {
    require_dir("--results", results)?;
    require_file("--gold", gold)?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Failure::Usage("--k: cutoffs must be positive integers".into()));
    }
    let files = RunFiles::in_dir(results);
    require_file("--results (results.jsonl)", &files.results)?;
    require_file("--results (candidates.jsonl)", &files.candidates)?;

    let records: Vec<MappingRecord> = read_jsonl(&files.results)?;
    let dumps: Vec<Dump> = read_jsonl(&files.candidates)?;
    let gold: Vec<GoldPair> = read_jsonl(gold)?;
    let lists = candidate_lists(&dumps)?;
    let report = evaluate::<f64, _>(&records, &lists, &gold, ks)?;

    let json = report.to_json();
    let pretty = serde_json::to_string_pretty(&json).context("serializing metrics")?;
    println!("{pretty}");
    if report.orderings_hold() {
        println!("orderings hold: a@k non-decreasing, a@1 <= MRR <= coverage");
    } else {
        println!("WARNING: metric orderings violated");
    }
    let path: PathBuf = out.map_or_else(|| results.join("metrics.json"), Path::to_path_buf);
    fs::write(&path, pretty + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ontology_names_are_case_insensitive() {
        assert_eq!(parse_ontology("BioLink").unwrap(), Ontology::Biolink);
        assert!(matches!(parse_ontology("umls"), Err(Failure::Usage(_))));
    }

    #[test]
    fn config_and_resume_errors_are_usage_errors() {
        assert!(matches!(Failure::from(PipelineError::Config("k".into())), Failure::Usage(_)));
        assert!(matches!(Failure::from(PipelineError::Resume("digest".into())), Failure::Usage(_)));
        let io = PipelineError::Io {
            path: "x".into(),
            source: std::io::Error::other("disk"),
        };
        assert!(matches!(Failure::from(io), Failure::Runtime(_)));
    }

    #[test]
    fn schema_errors_are_usage_errors() {
        let err = EvalError::Schema {
            path: "results.jsonl".into(),
            line: 3,
            message: "missing field".into(),
        };
        assert!(matches!(Failure::from(err), Failure::Usage(m) if m.contains("results.jsonl: line 3")));
    }

    #[test]
    fn declared_ontology_reads_the_catalog_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"ontology": "chemprot", "predicates": []}"#).unwrap();
        assert_eq!(declared_ontology(&path), Some(Ontology::Chemprot));
        fs::write(&path, "{}").unwrap();
        assert_eq!(declared_ontology(&path), None);
    }
}
