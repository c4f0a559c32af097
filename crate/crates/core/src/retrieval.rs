//! Candidate predicate retrieval for a free-text relation.
//!
//! The relation text is embedded with the store's model, the top-k
//! descriptors are fetched, descriptors of the same base predicate are
//! collapsed into one candidate (a `_NEG` hit collapses onto its base label
//! and sets `negation_evidence`), and the candidate lists of up to two
//! stores are merged into at most `2k` unique predicates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::RetrievalError;
use crate::ontology::Polarity;
use crate::providers::EmbeddingClient;
use crate::scalar::Scalar;
use crate::store::{EmbeddingStore, ScoredRecord, StoreManifest, StoreRole};
use crate::vector::EmbeddingVector;

pub const DEFAULT_K: usize = 10;

/// Input quadruple: subject, object, free-form relation text and the
/// abstract it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    #[serde(rename = "id")]
    pub relation_id: String,
    pub subject: String,
    pub object: String,
    #[serde(rename = "relation")]
    pub relation_text: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
}

impl ExtractedRelation {
    pub fn new(
        id: impl Into<String>,
        subject: impl Into<String>,
        object: impl Into<String>,
        relation_text: impl Into<String>,
        abstract_text: impl Into<String>,
    ) -> Self {
        Self {
            relation_id: id.into(),
            subject: subject.into(),
            object: object.into(),
            relation_text: relation_text.into(),
            abstract_text: abstract_text.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let blank = [
            ("id", &self.relation_id),
            ("subject", &self.subject),
            ("object", &self.object),
            ("relation", &self.relation_text),
        ]
        .into_iter()
        .find(|(_, v)| v.trim().is_empty());
        match blank {
            Some((field, _)) => Err(RetrievalError::InvalidRelation {
                id: self.relation_id.clone(),
                reason: format!("`{field}` is blank"),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SupportingDescriptor<S> {
    pub text: String,
    pub polarity: Polarity,
    pub score: S,
}

/// All retrieved descriptors of one base predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateCandidate<S> {
    pub base_label: String,
    pub best_score: S,
    /// 1-based rank of the best descriptor in its store's result list.
    pub best_rank: usize,
    pub negation_evidence: bool,
    pub supporting_descriptors: Vec<SupportingDescriptor<S>>,
}

/// Collapsed candidates from a single store.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFragment<S> {
    pub k: usize,
    pub source: StoreRole,
    pub candidates: Vec<PredicateCandidate<S>>,
}

/// Merged candidates for one relation, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<S> {
    pub relation_id: String,
    pub k: usize,
    pub sources: BTreeSet<StoreRole>,
    pub candidates: Vec<PredicateCandidate<S>>,
}

impl<S: Scalar> CandidateSet<S> {
    pub fn labels(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.base_label.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn to_dump(&self) -> CandidateDump<S> {
        CandidateDump {
            id: self.relation_id.clone(),
            candidates: self
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| DumpedCandidate {
                    label: c.base_label.clone(),
                    score: c.best_score,
                    rank: i + 1,
                    negation_evidence: c.negation_evidence,
                })
                .collect(),
        }
    }
}

/// Serialized candidate list of one relation, as consumed by evaluation.
/// `rank` is the 1-based position in the merged list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CandidateDump<S> {
    pub id: String,
    pub candidates: Vec<DumpedCandidate<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DumpedCandidate<S> {
    pub label: String,
    pub score: S,
    pub rank: usize,
    pub negation_evidence: bool,
}

fn candidate_order<S: Scalar>(a: &PredicateCandidate<S>, b: &PredicateCandidate<S>) -> Ordering {
    b.best_score
        .partial_cmp(&a.best_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.base_label.cmp(&b.base_label))
}

fn supporting_order<S: Scalar>(a: &SupportingDescriptor<S>, b: &SupportingDescriptor<S>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.text.cmp(&b.text))
        .then_with(|| a.polarity.cmp(&b.polarity))
}

/// Embeds only the relation text. The embedder must be the model the
/// target store was built with.
pub fn embed_relation<S: Scalar>(
    relation: &ExtractedRelation,
    embedder: &EmbeddingClient,
    manifest: &StoreManifest,
) -> Result<EmbeddingVector<S>, RetrievalError> {
    relation.validate()?;
    if embedder.model_id() != manifest.model_id {
        return Err(RetrievalError::Consistency(format!(
            "embedder `{}` does not match store model `{}`",
            embedder.model_id(),
            manifest.model_id
        )));
    }
    let mut vectors = embedder.embed_texts::<S>(&[relation.relation_text.as_str()])?;
    Ok(vectors.remove(0))
}

/// Groups ranked descriptor hits by base predicate.
pub fn collapse<S: Scalar>(hits: &[ScoredRecord<'_, S>]) -> Vec<PredicateCandidate<S>> {
    let mut by_label: BTreeMap<&str, PredicateCandidate<S>> = BTreeMap::new();
    for hit in hits {
        let r = hit.record;
        let entry = by_label
            .entry(r.base_label())
            .or_insert_with(|| PredicateCandidate {
                base_label: r.base_label().to_owned(),
                best_score: hit.score,
                best_rank: hit.rank,
                negation_evidence: false,
                supporting_descriptors: Vec::new(),
            });
        if hit.score > entry.best_score || (hit.score == entry.best_score && hit.rank < entry.best_rank) {
            entry.best_score = hit.score;
            entry.best_rank = hit.rank;
        }
        entry.negation_evidence |= r.polarity == Polarity::Negative;
        entry.supporting_descriptors.push(SupportingDescriptor {
            text: r.descriptor_text.clone(),
            polarity: r.polarity,
            score: hit.score,
        });
    }
    let mut candidates: Vec<_> = by_label.into_values().collect();
    for c in &mut candidates {
        c.supporting_descriptors.sort_by(supporting_order);
    }
    candidates.sort_by(candidate_order);
    candidates
}

/// Top-`k` descriptors from `store`, collapsed to at most `k` candidates.
/// Collapsing does not refill the list back up to `k`.
pub fn retrieve_candidates<S: Scalar>(
    store: &EmbeddingStore<S>,
    query: &EmbeddingVector<S>,
    k: usize,
) -> Result<CandidateFragment<S>, RetrievalError> {
    let hits = store.knn(query, k)?;
    Ok(CandidateFragment {
        k,
        source: store.role(),
        candidates: collapse(&hits),
    })
}

/// Unions two fragments by base label: keeps the higher score (and the
/// better rank), ORs negation evidence and unions supporting descriptors.
/// With no auxiliary fragment the primary fragment is passed through.
pub fn hybrid_merge<S: Scalar>(
    relation_id: &str,
    primary: CandidateFragment<S>,
    auxiliary: Option<CandidateFragment<S>>,
    k: usize,
) -> Result<CandidateSet<S>, RetrievalError> {
    for fragment in std::iter::once(&primary).chain(auxiliary.as_ref()) {
        if fragment.k != k {
            return Err(RetrievalError::MergeContractViolation(format!(
                "{} fragment built with k={} but merge asked for k={k}",
                fragment.source, fragment.k
            )));
        }
        if fragment.candidates.len() > k {
            return Err(RetrievalError::MergeContractViolation(format!(
                "{} fragment holds {} candidates, more than k={k}",
                fragment.source,
                fragment.candidates.len()
            )));
        }
    }
    let mut sources = BTreeSet::from([primary.source]);
    let mut merged: BTreeMap<String, PredicateCandidate<S>> = BTreeMap::new();
    let fragments = std::iter::once(primary).chain(auxiliary);
    for fragment in fragments {
        sources.insert(fragment.source);
        for c in fragment.candidates {
            match merged.get_mut(&c.base_label) {
                None => {
                    merged.insert(c.base_label.clone(), c);
                }
                Some(existing) => {
                    if c.best_score > existing.best_score {
                        existing.best_score = c.best_score;
                    }
                    existing.best_rank = existing.best_rank.min(c.best_rank);
                    existing.negation_evidence |= c.negation_evidence;
                    existing.supporting_descriptors.extend(c.supporting_descriptors);
                }
            }
        }
    }
    let mut candidates: Vec<_> = merged.into_values().collect();
    for c in &mut candidates {
        let mut support = std::mem::take(&mut c.supporting_descriptors);
        support.sort_by(supporting_order);
        let mut seen = BTreeSet::new();
        support.retain(|s| seen.insert((s.text.clone(), s.polarity)));
        c.supporting_descriptors = support;
    }
    candidates.sort_by(candidate_order);
    Ok(CandidateSet {
        relation_id: relation_id.to_owned(),
        k,
        sources,
        candidates,
    })
}
