//! Maps free-text biomedical relations onto the predicates of a target
//! ontology.
//!
//! Preprocessing augments a predicate catalog with negated descriptors and
//! embeds every descriptor into an [`EmbeddingStore`]. Mapping retrieves
//! the nearest descriptors for a relation, collapses them to candidate
//! predicates and asks a chat model to pick one (or none).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod jsonl;
pub mod ontology;
pub mod pipeline;
pub mod providers;
pub mod rerank;
pub mod retrieval;
pub mod scalar;
pub mod store;
pub mod vector;

pub use error::{
    CatalogError, EvalError, PipelineError, ProviderError, RerankError, RetrievalError, StoreError,
    TransportError,
};
pub use scalar::{cosine, Scalar};

pub type Embedding = vector::EmbeddingVector<f64>;
pub type Store = store::EmbeddingStore<f64>;
pub type Record = store::EmbeddingRecord<f64>;
pub type Candidate = retrieval::PredicateCandidate<f64>;
pub type Candidates = retrieval::CandidateSet<f64>;
pub type Fragment = retrieval::CandidateFragment<f64>;
pub type Dump = retrieval::CandidateDump<f64>;
pub type Engine = pipeline::MappingEngine<f64>;
pub type Binding = pipeline::StoreBinding<f64>;
pub type Outcome = pipeline::RelationOutcome<f64>;
pub type Metrics = evaluation::MetricsReport<f64>;
