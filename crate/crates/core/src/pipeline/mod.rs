//! End-to-end mapping: retrieval and reranking for every input relation,
//! producing edge records, per-relation results and a run report.

mod checkpoint;
mod preprocess;
mod run;

use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointEntry, CheckpointHeader};
pub use preprocess::{
    preprocess, BuiltStore, PreprocessSummary, StoreTarget, AUGMENTED_CATALOG_FILE, NEGATION_SKIPS_FILE,
};
pub use run::{read_relations, run_mapping, RunFiles, RunOptions, RunStatus, RunSummary};

use crate::error::PipelineError;
use crate::evaluation::Decision;
use crate::providers::{ChatClient, EmbeddingClient};
use crate::rerank::{select_predicate, MappingOutcome, MappingResult};
use crate::retrieval::{
    embed_relation, hybrid_merge, retrieve_candidates, CandidateDump, CandidateSet, ExtractedRelation,
};
use crate::scalar::Scalar;
use crate::store::{format_timestamp, EmbeddingStore, StoreRole};

/// A store together with the embedder that must be used to query it.
#[derive(Debug, Clone)]
pub struct StoreBinding<S> {
    pub store: EmbeddingStore<S>,
    pub embedder: EmbeddingClient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreProvenance {
    pub role: StoreRole,
    pub model_id: String,
    pub manifest_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stores: Vec<StoreProvenance>,
    pub chat_model_id: String,
    pub run_id: String,
    pub timestamp: String,
}

/// A mapped relation, ready for knowledge-graph ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub subject: String,
    pub object: String,
    pub predicate: String,
    #[serde(default)]
    pub negated: bool,
    pub relation_id: String,
    pub source_relation_text: String,
    pub provenance: Provenance,
}

/// One line of the mapping results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub id: String,
    pub subject: String,
    pub object: String,
    pub mapped_predicate: Option<String>,
    pub negated: bool,
    pub outcome: MappingOutcome,
    pub candidates_offered: usize,
    pub raw_response_digest: String,
}

impl MappingRecord {
    pub fn new(relation: &ExtractedRelation, result: &MappingResult) -> Self {
        Self {
            id: result.relation_id.clone(),
            subject: relation.subject.clone(),
            object: relation.object.clone(),
            mapped_predicate: result.mapped_predicate.clone(),
            negated: result.negated,
            outcome: result.outcome,
            candidates_offered: result.candidate_count,
            raw_response_digest: result.raw_response_digest(),
        }
    }
}

impl Decision for MappingRecord {
    fn relation_id(&self) -> &str {
        &self.id
    }
    fn outcome(&self) -> MappingOutcome {
        self.outcome
    }
    fn mapped_predicate(&self) -> Option<&str> {
        self.mapped_predicate.as_deref()
    }
    fn negated(&self) -> bool {
        self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total: usize,
    pub mapped: usize,
    pub rejected_none: usize,
    pub parse_failures: usize,
    pub invalid_selections: usize,
    pub negated_count: usize,
    pub rejection_rate: f64,
    pub negation_rate: f64,
}

impl RunReport {
    pub fn tally<'a>(results: impl IntoIterator<Item = &'a MappingResult>) -> Self {
        let mut report = Self {
            total: 0,
            mapped: 0,
            rejected_none: 0,
            parse_failures: 0,
            invalid_selections: 0,
            negated_count: 0,
            rejection_rate: 0.0,
            negation_rate: 0.0,
        };
        for r in results {
            report.total += 1;
            match r.outcome {
                MappingOutcome::Mapped => {
                    report.mapped += 1;
                    report.negated_count += usize::from(r.negated);
                }
                MappingOutcome::RejectedNone => report.rejected_none += 1,
                MappingOutcome::ParseFailure => report.parse_failures += 1,
                MappingOutcome::InvalidSelection => report.invalid_selections += 1,
            }
        }
        if report.total > 0 {
            report.rejection_rate = report.rejected_none as f64 / report.total as f64;
            report.negation_rate = report.negated_count as f64 / report.total as f64;
        }
        report
    }
}

/// Identity of a run, stamped into every edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub started_at: DateTime<Utc>,
}

/// Everything produced for one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationOutcome<S> {
    pub result: MappingResult,
    pub candidates: CandidateDump<S>,
    pub edge: Option<EdgeRecord>,
}

#[derive(Debug, Clone)]
pub struct MappingEngine<S> {
    base: StoreBinding<S>,
    auxiliary: Option<StoreBinding<S>>,
    chat: ChatClient,
    k: usize,
    concurrency: usize,
}

impl<S: Scalar> MappingEngine<S> {
    /// Checks that each store is queried with the model that built it and
    /// that the stores sit in their declared roles.
    pub fn new(
        base: StoreBinding<S>,
        auxiliary: Option<StoreBinding<S>>,
        chat: ChatClient,
        k: usize,
        concurrency: usize,
    ) -> Result<Self, PipelineError> {
        if k == 0 {
            return Err(PipelineError::Config("k must be >= 1".into()));
        }
        if concurrency == 0 {
            return Err(PipelineError::Config("concurrency must be >= 1".into()));
        }
        let expect = |binding: &StoreBinding<S>, role: StoreRole| {
            if binding.store.role() != role {
                return Err(PipelineError::Config(format!(
                    "store configured as {role} was built as {}",
                    binding.store.role()
                )));
            }
            if binding.embedder.model_id() != binding.store.model_id() {
                return Err(PipelineError::Config(format!(
                    "{role} store was built with `{}` but is queried with `{}`",
                    binding.store.model_id(),
                    binding.embedder.model_id()
                )));
            }
            Ok(())
        };
        expect(&base, StoreRole::Base)?;
        if let Some(aux) = &auxiliary {
            expect(aux, StoreRole::Auxiliary)?;
        }
        Ok(Self {
            base,
            auxiliary,
            chat,
            k,
            concurrency,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn chat(&self) -> &ChatClient {
        &self.chat
    }

    fn bindings(&self) -> impl Iterator<Item = &StoreBinding<S>> {
        std::iter::once(&self.base).chain(self.auxiliary.as_ref())
    }

    pub fn store_provenance(&self) -> Vec<StoreProvenance> {
        self.bindings()
            .map(|b| StoreProvenance {
                role: b.store.role(),
                model_id: b.store.model_id().to_owned(),
                manifest_digest: b.store.manifest().digest(),
            })
            .collect()
    }

    pub fn provenance(&self, run: &RunInfo) -> Provenance {
        Provenance {
            stores: self.store_provenance(),
            chat_model_id: self.chat.model_id().to_owned(),
            run_id: run.run_id.clone(),
            timestamp: format_timestamp(&run.started_at),
        }
    }

    /// Retrieval and merge for one relation.
    pub fn candidates(&self, relation: &ExtractedRelation) -> Result<CandidateSet<S>, crate::error::RetrievalError> {
        let mut fragments = Vec::with_capacity(2);
        for binding in self.bindings() {
            let query = embed_relation::<S>(relation, &binding.embedder, binding.store.manifest())?;
            fragments.push(retrieve_candidates(&binding.store, &query, self.k)?);
        }
        let mut fragments = fragments.into_iter();
        let primary = fragments.next().expect("base store is always present");
        hybrid_merge(&relation.relation_id, primary, fragments.next(), self.k)
    }

    /// Runs both stages for one relation. Failures are folded into the
    /// returned result's outcome.
    pub fn map_relation(&self, relation: &ExtractedRelation, provenance: &Provenance) -> RelationOutcome<S> {
        let candidates = match self.candidates(relation) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("retrieval failed for `{}`: {e}", relation.relation_id);
                return RelationOutcome {
                    result: MappingResult::failed(&relation.relation_id, 0, e.to_string()),
                    candidates: CandidateDump {
                        id: relation.relation_id.clone(),
                        candidates: Vec::new(),
                    },
                    edge: None,
                };
            }
        };
        let result = select_predicate(relation, &candidates, &self.chat);
        let edge = match (&result.outcome, &result.mapped_predicate) {
            (MappingOutcome::Mapped, Some(predicate)) => Some(EdgeRecord {
                subject: relation.subject.clone(),
                object: relation.object.clone(),
                predicate: predicate.clone(),
                negated: result.negated,
                relation_id: relation.relation_id.clone(),
                source_relation_text: relation.relation_text.clone(),
                provenance: provenance.clone(),
            }),
            _ => None,
        };
        RelationOutcome {
            result,
            candidates: candidates.to_dump(),
            edge,
        }
    }

    /// Maps relations on a pool of `concurrency` workers. `on_done` sees
    /// each outcome as it completes; once `stop` is raised no further
    /// relation is started. Returns outcomes in input order, `None` for
    /// relations that were not started.
    pub fn map_each(
        &self,
        relations: &[ExtractedRelation],
        run: &RunInfo,
        stop: &AtomicBool,
        on_done: &(dyn Fn(&ExtractedRelation, &RelationOutcome<S>) + Sync),
    ) -> Vec<Option<RelationOutcome<S>>> {
        let provenance = self.provenance(run);
        let work = || {
            relations
                .par_iter()
                .map(|rel| {
                    if stop.load(Ordering::SeqCst) {
                        return None;
                    }
                    let outcome = self.map_relation(rel, &provenance);
                    on_done(rel, &outcome);
                    Some(outcome)
                })
                .collect()
        };
        match rayon::ThreadPoolBuilder::new().num_threads(self.concurrency).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                log::warn!("falling back to the global pool: {e}");
                work()
            }
        }
    }

    /// Maps every relation and tallies the run.
    pub fn map_batch(&self, relations: &[ExtractedRelation], run: &RunInfo) -> BatchOutput<S> {
        let stop = AtomicBool::new(false);
        let outcomes: Vec<RelationOutcome<S>> = self
            .map_each(relations, run, &stop, &|_, _| {})
            .into_iter()
            .map(|o| o.expect("no stop requested"))
            .collect();
        BatchOutput::new(outcomes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput<S> {
    pub outcomes: Vec<RelationOutcome<S>>,
    pub report: RunReport,
}

impl<S: Scalar> BatchOutput<S> {
    pub fn new(outcomes: Vec<RelationOutcome<S>>) -> Self {
        let report = RunReport::tally(outcomes.iter().map(|o| &o.result));
        Self { outcomes, report }
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.outcomes.iter().filter_map(|o| o.edge.as_ref())
    }

    pub fn results(&self) -> impl Iterator<Item = &MappingResult> {
        self.outcomes.iter().map(|o| &o.result)
    }

    pub fn dumps(&self) -> impl Iterator<Item = &CandidateDump<S>> {
        self.outcomes.iter().map(|o| &o.candidates)
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    fn result(outcome: MappingOutcome, negated: bool) -> MappingResult {
        MappingResult {
            relation_id: "x".into(),
            mapped_predicate: (outcome == MappingOutcome::Mapped).then(|| "treats".into()),
            negated,
            outcome,
            candidate_count: 1,
            raw_response: String::new(),
            latency: Duration::ZERO,
            llm_calls: 1,
            error: None,
        }
    }

    #[test]
    fn empty_report_is_all_zero() {
        let r = RunReport::tally(std::iter::empty());
        assert_eq!(r.total, 0);
        assert_eq!(r.rejection_rate, 0.0);
        assert_eq!(r.negation_rate, 0.0);
    }

    #[test]
    fn report_categories_reconcile() {
        let results = vec![
            result(MappingOutcome::Mapped, true),
            result(MappingOutcome::Mapped, false),
            result(MappingOutcome::RejectedNone, false),
            result(MappingOutcome::ParseFailure, false),
            result(MappingOutcome::InvalidSelection, false),
        ];
        let r = RunReport::tally(&results);
        assert_eq!(r.total, 5);
        assert_eq!(r.mapped + r.rejected_none + r.parse_failures + r.invalid_selections, r.total);
        assert_eq!(r.negated_count, 1);
        assert_eq!(r.rejection_rate, 0.2);
        assert_eq!(r.negation_rate, 0.2);
    }
}
