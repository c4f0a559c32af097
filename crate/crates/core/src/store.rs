//! Persisted per-descriptor embeddings and exact cosine search over them.
//!
//! On disk a store is a directory holding `manifest.json` and
//! `records.jsonl`, one `{predicate, polarity, text, vector}` object per
//! line. Vectors are L2-normalized before they are written, so cosine
//! against a stored record reduces to a dot product.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, StoreError};
use crate::ontology::{base_label, Polarity, PredicateCatalog};
use crate::providers::EmbeddingClient;
use crate::scalar::{self, Scalar};
use crate::vector::EmbeddingVector;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreRole {
    Base,
    Auxiliary,
}

impl fmt::Display for StoreRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreRole::Base => "base",
            StoreRole::Auxiliary => "auxiliary",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord<S> {
    pub predicate_label: String,
    pub descriptor_text: String,
    pub polarity: Polarity,
    pub vector: EmbeddingVector<S>,
}

impl<S> EmbeddingRecord<S> {
    pub fn base_label(&self) -> &str {
        base_label(&self.predicate_label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub model_id: String,
    pub dim: usize,
    pub catalog_version: String,
    pub record_count: usize,
    pub created_at: DateTime<Utc>,
    pub store_role: StoreRole,
    pub scalar: String,
    /// SHA-256 of the records file.
    pub records_digest: String,
}

impl StoreManifest {
    fn same_content(&self, other: &Self) -> bool {
        Self {
            created_at: other.created_at,
            ..self.clone()
        } == *other
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("manifest serializes");
        out.push('\n');
        out
    }

    /// SHA-256 of the serialized manifest; identifies the store in provenance.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar", deny_unknown_fields)]
struct RecordLine<S> {
    predicate: String,
    polarity: Polarity,
    text: String,
    vector: Vec<S>,
}

/// Input to [`EmbeddingStore::from_raw`]: a descriptor and its unnormalized vector.
#[derive(Debug, Clone)]
pub struct RawRecord<S> {
    pub predicate_label: String,
    pub descriptor_text: String,
    pub polarity: Polarity,
    pub values: Vec<S>,
}

/// A descriptor whose embedding had zero norm and was left out of the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegenerateEmbedding {
    pub predicate_label: String,
    pub descriptor_text: String,
}

/// One search hit. `rank` is 1-based.
#[derive(Debug, Clone, Copy)]
pub struct ScoredRecord<'a, S> {
    pub record: &'a EmbeddingRecord<S>,
    pub score: S,
    pub rank: usize,
}

/// Immutable set of descriptor embeddings from one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<S> {
    manifest: StoreManifest,
    records: Vec<EmbeddingRecord<S>>,
}

impl<S: Scalar> EmbeddingStore<S> {
    /// Normalizes each vector and assembles a store. Zero-norm vectors are
    /// skipped and reported; a vector of the wrong dimension is an error.
    pub fn from_raw(
        model_id: &str,
        catalog_version: &str,
        role: StoreRole,
        created_at: DateTime<Utc>,
        raw: Vec<RawRecord<S>>,
    ) -> Result<(Self, Vec<DegenerateEmbedding>), StoreError> {
        let dim = raw.first().map(|r| r.values.len()).ok_or(StoreError::Empty)?;
        let mut records = Vec::with_capacity(raw.len());
        let mut degenerate = Vec::new();
        for r in raw {
            if r.values.len() != dim {
                return Err(crate::error::ProviderError::ContractViolation(format!(
                    "embedding for `{}` has dim {} but the store dim is {dim}",
                    r.descriptor_text,
                    r.values.len()
                ))
                .into());
            }
            let normalized = EmbeddingVector::new(r.values, model_id).and_then(|v| v.normalized());
            match normalized {
                Some(vector) => records.push(EmbeddingRecord {
                    predicate_label: r.predicate_label,
                    descriptor_text: r.descriptor_text,
                    polarity: r.polarity,
                    vector,
                }),
                None => {
                    log::warn!(
                        "skipping degenerate embedding for `{}` ({})",
                        r.descriptor_text,
                        r.predicate_label
                    );
                    degenerate.push(DegenerateEmbedding {
                        predicate_label: r.predicate_label,
                        descriptor_text: r.descriptor_text,
                    });
                }
            }
        }
        if records.is_empty() {
            return Err(StoreError::Empty);
        }
        let mut store = Self {
            manifest: StoreManifest {
                model_id: model_id.to_owned(),
                dim,
                catalog_version: catalog_version.to_owned(),
                record_count: records.len(),
                created_at,
                store_role: role,
                scalar: S::NAME.to_owned(),
                records_digest: String::new(),
            },
            records,
        };
        store.manifest.records_digest = hex::encode(Sha256::digest(store.records_jsonl().as_bytes()));
        Ok((store, degenerate))
    }

    /// Embeds every descriptor of `catalog` (positive and negative) with
    /// `embedder`, one record per descriptor, in catalog order.
    pub fn build(
        catalog: &PredicateCatalog,
        embedder: &EmbeddingClient,
        role: StoreRole,
        created_at: DateTime<Utc>,
    ) -> Result<(Self, Vec<DegenerateEmbedding>), StoreError> {
        let mut raw = Vec::with_capacity(catalog.descriptors.len());
        let mut dim = None;
        for chunk in catalog.descriptors.chunks(EMBED_BATCH) {
            let texts: Vec<&str> = chunk.iter().map(|d| d.text.as_str()).collect();
            let vectors = embedder.embed_texts::<S>(&texts)?;
            for (d, v) in chunk.iter().zip(vectors) {
                if *dim.get_or_insert(v.dim()) != v.dim() {
                    return Err(crate::error::ProviderError::ContractViolation(format!(
                        "embedding dim drifted from {} to {} mid-build",
                        dim.unwrap_or_default(),
                        v.dim()
                    ))
                    .into());
                }
                raw.push(RawRecord {
                    predicate_label: d.predicate_label.clone(),
                    descriptor_text: d.text.clone(),
                    polarity: d.polarity,
                    values: v.into_values(),
                });
            }
        }
        Self::from_raw(embedder.model_id(), &catalog.version, role, created_at, raw)
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn records(&self) -> &[EmbeddingRecord<S>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn model_id(&self) -> &str {
        &self.manifest.model_id
    }

    pub fn role(&self) -> StoreRole {
        self.manifest.store_role
    }

    fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = RecordLine {
                predicate: r.predicate_label.clone(),
                polarity: r.polarity,
                text: r.descriptor_text.clone(),
                vector: r.vector.values().to_vec(),
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes manifest and records into `dir`. When `dir` already holds a
    /// store with identical content, its `created_at` is kept so that the
    /// files are rewritten byte for byte.
    pub fn save(&mut self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        if let Ok(text) = fs::read_to_string(&manifest_path) {
            if let Ok(existing) = serde_json::from_str::<StoreManifest>(&text) {
                if existing.same_content(&self.manifest) {
                    self.manifest.created_at = existing.created_at;
                }
            }
        }
        let records_path = dir.join(RECORDS_FILE);
        fs::write(&records_path, self.records_jsonl()).map_err(io_err(&records_path))?;
        fs::write(&manifest_path, self.manifest.to_json()).map_err(io_err(&manifest_path))?;
        Ok(())
    }

    /// Loads a store written by [`save`](Self::save), checking the manifest
    /// against the records.
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: StoreManifest = serde_json::from_str(&text)
            .map_err(|e| StoreError::Corrupt(format!("{}: {e}", manifest_path.display())))?;
        if manifest.scalar != S::NAME {
            return Err(StoreError::Corrupt(format!(
                "store holds {} values but was loaded as {}",
                manifest.scalar,
                S::NAME
            )));
        }

        let records_path = dir.join(RECORDS_FILE);
        let body = fs::read_to_string(&records_path).map_err(io_err(&records_path))?;
        let mut records = Vec::with_capacity(manifest.record_count);
        for (i, line) in body.lines().enumerate() {
            let corrupt = |msg: String| {
                StoreError::Corrupt(format!("{}:{}: {msg}", records_path.display(), i + 1))
            };
            let parsed: RecordLine<S> =
                serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            if parsed.vector.len() != manifest.dim {
                return Err(corrupt(format!(
                    "vector dim {} != manifest dim {}",
                    parsed.vector.len(),
                    manifest.dim
                )));
            }
            let vector = EmbeddingVector::new(parsed.vector, manifest.model_id.clone())
                .ok_or_else(|| corrupt("non-finite vector".into()))?;
            if (vector.norm() - S::one()).abs() > S::NORM_TOLERANCE {
                return Err(corrupt(format!("vector norm {} is not 1", vector.norm())));
            }
            records.push(EmbeddingRecord {
                predicate_label: parsed.predicate,
                descriptor_text: parsed.text,
                polarity: parsed.polarity,
                vector,
            });
        }
        if records.len() != manifest.record_count {
            return Err(StoreError::Corrupt(format!(
                "manifest lists {} records, {} found",
                manifest.record_count,
                records.len()
            )));
        }
        if !body.is_empty() && !body.ends_with('\n') {
            return Err(StoreError::Corrupt("records file is truncated".into()));
        }
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        if digest != manifest.records_digest {
            return Err(StoreError::Corrupt("records digest does not match manifest".into()));
        }
        Ok(Self { manifest, records })
    }

    /// Exact top-`k` search by cosine similarity.
    ///
    /// Results are ordered by score descending, ties broken by predicate
    /// label then descriptor text, ascending.
    pub fn knn(&self, query: &EmbeddingVector<S>, k: usize) -> Result<Vec<ScoredRecord<'_, S>>, StoreError> {
        if k == 0 {
            return Err(StoreError::QueryContractViolation("k must be >= 1".into()));
        }
        if query.dim() != self.dim() {
            return Err(StoreError::QueryContractViolation(format!(
                "query dim {} != store dim {}",
                query.dim(),
                self.dim()
            )));
        }
        if query.model_id() != self.model_id() {
            return Err(StoreError::QueryContractViolation(format!(
                "query embedded by `{}`, store built with `{}`",
                query.model_id(),
                self.model_id()
            )));
        }
        let query_norm = query.norm();
        if query_norm == S::zero() {
            return Err(StoreError::QueryContractViolation("query vector has zero norm".into()));
        }

        let mut scored: Vec<(usize, S)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = scalar::dot(query.values(), r.vector.values()) / query_norm;
                (i, s.max(-S::one()).min(S::one()))
            })
            .collect();
        let order = |a: &(usize, S), b: &(usize, S)| -> Ordering {
            let (ra, rb) = (&self.records[a.0], &self.records[b.0]);
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ra.predicate_label.cmp(&rb.predicate_label))
                .then_with(|| ra.descriptor_text.cmp(&rb.descriptor_text))
                .then_with(|| a.0.cmp(&b.0))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(pos, (i, score))| ScoredRecord {
                record: &self.records[i],
                score,
                rank: pos + 1,
            })
            .collect())
    }
}

pub(crate) fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}
