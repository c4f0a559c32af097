use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use crate::error::{io_err, PipelineError};
use crate::ontology::{generate_negations, write_skip_report, NegationSkip, PredicateCatalog};
use crate::providers::{ChatClient, EmbeddingClient};
use crate::scalar::Scalar;
use crate::store::{DegenerateEmbedding, EmbeddingStore, StoreManifest, StoreRole};

pub const AUGMENTED_CATALOG_FILE: &str = "catalog.augmented.json";
pub const NEGATION_SKIPS_FILE: &str = "negation_skips.jsonl";

/// One store to build: which embedder to use and where to write it.
#[derive(Debug, Clone)]
pub struct StoreTarget {
    pub role: StoreRole,
    pub embedder: EmbeddingClient,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BuiltStore {
    pub role: StoreRole,
    pub dir: PathBuf,
    pub manifest: StoreManifest,
    pub degenerate: Vec<DegenerateEmbedding>,
}

#[derive(Debug, Clone)]
pub struct PreprocessSummary {
    pub catalog: PredicateCatalog,
    pub negation_skips: Vec<NegationSkip>,
    pub negations_added: usize,
    pub stores: Vec<BuiltStore>,
}

/// Adds negated descriptors to `catalog`, writes the augmented catalog and
/// skip report into `out_dir`, then builds and saves one store per target.
pub fn preprocess<S: Scalar>(
    catalog: &PredicateCatalog,
    negation_chat: &ChatClient,
    targets: &[StoreTarget],
    out_dir: &Path,
    created_at: DateTime<Utc>,
) -> Result<PreprocessSummary, PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let negation = generate_negations(catalog, negation_chat)?;
    log::info!(
        "negation: {} attempted, {} added, {} skipped",
        negation.attempted,
        negation.added,
        negation.skips.len()
    );
    negation.catalog.write_file(&out_dir.join(AUGMENTED_CATALOG_FILE))?;
    write_skip_report(&out_dir.join(NEGATION_SKIPS_FILE), &negation.skips)?;

    let mut stores = Vec::with_capacity(targets.len());
    for target in targets {
        let (mut store, degenerate) =
            EmbeddingStore::<S>::build(&negation.catalog, &target.embedder, target.role, created_at)?;
        store.save(&target.dir)?;
        log::info!(
            "{} store: {} records, dim {}, written to {}",
            target.role,
            store.len(),
            store.dim(),
            target.dir.display()
        );
        stores.push(BuiltStore {
            role: target.role,
            dir: target.dir.clone(),
            manifest: store.manifest().clone(),
            degenerate,
        });
    }
    Ok(PreprocessSummary {
        catalog: negation.catalog,
        negation_skips: negation.skips,
        negations_added: negation.added,
        stores,
    })
}
