use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by embedding and chat providers.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("gave up after {attempts} attempt(s): {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("provider contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid provider input: {0}")]
    InvalidInput(String),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
}

/// A single transport attempt failed. Retried by the client wrappers.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

impl TransportError {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{path}: parse error at {}, field `{field}`: {message}", line.map_or_else(|| "unknown line".to_owned(), |l| format!("line {l}")))]
    Parse {
        path: String,
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("catalog integrity error: {0}")]
    Integrity(String),
    #[error("negation yield too low: {skipped} of {total} descriptors skipped")]
    NegationYield { skipped: usize, total: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("query contract violation: {0}")]
    QueryContractViolation(String),
    #[error("store has no records")]
    Empty,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid relation `{id}`: {reason}")]
    InvalidRelation { id: String, reason: String },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("merge contract violation: {0}")]
    MergeContractViolation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("prompt contract violation: {0}")]
    PromptContractViolation(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("{path}: line {line}: {message}")]
    Input {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation input error: {0}")]
    Input(String),
    #[error("{path}: line {line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Attaches a path to an I/O error; `?` converts the result into the
/// caller's error type.
pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> IoContext {
    let path = path.into();
    move |source| IoContext { path, source }
}

pub(crate) struct IoContext {
    pub path: PathBuf,
    pub source: io::Error,
}

macro_rules! impl_io_context {
    ($($ty:ty),*) => {$(
        impl From<IoContext> for $ty {
            fn from(ctx: IoContext) -> Self {
                Self::Io { path: ctx.path, source: ctx.source }
            }
        }
    )*};
}

impl_io_context!(CatalogError, StoreError, PipelineError, EvalError);
