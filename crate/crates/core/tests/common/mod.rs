#![allow(dead_code)]

pub mod metrics;
pub mod oracle;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use predmap_core::ontology::{negative_label, Ontology, Polarity, PredicateCatalog};
use predmap_core::providers::{ChatClient, EmbeddingClient, ProviderConfig, RetryPolicy, ScriptedChat};
use predmap_core::retrieval::ExtractedRelation;
use predmap_core::store::{EmbeddingStore, RawRecord, StoreRole};
use predmap_core::Store;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn chemprot_catalog() -> PredicateCatalog {
    PredicateCatalog::parse_file(&fixture("chemprot_table2.json"), Ontology::Chemprot).unwrap()
}

pub fn small_catalog() -> PredicateCatalog {
    PredicateCatalog::parse_file(&fixture("biolink_small.json"), Ontology::Biolink).unwrap()
}

pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_704_067_200, 0).unwrap()
}

pub fn hash_embedder(seed: u64, dim: usize) -> EmbeddingClient {
    EmbeddingClient::from_config(&ProviderConfig::deterministic(dim), seed).unwrap()
}

pub fn hash_embedder_named(seed: u64, dim: usize, model_id: &str) -> EmbeddingClient {
    let mut cfg = ProviderConfig::deterministic(dim);
    cfg.model_id = model_id.into();
    EmbeddingClient::from_config(&cfg, seed).unwrap()
}

/// Wraps a scripted double in a client with `max_retries` immediate retries,
/// keeping a handle for call counting.
pub fn scripted_client(chat: ScriptedChat, max_retries: u32) -> (ChatClient, Arc<ScriptedChat>) {
    let chat = Arc::new(chat);
    let client = ChatClient::new(chat.clone(), RetryPolicy::immediate(max_retries), 8);
    (client, chat)
}

/// Labels between the candidate header and the instructions of a rerank prompt.
pub fn offered_labels(prompt: &str) -> Vec<String> {
    let Some(start) = prompt.find("Candidate Predicates:\n") else {
        return Vec::new();
    };
    let rest = &prompt[start + "Candidate Predicates:\n".len()..];
    let end = rest.find("\n\nInstructions:").unwrap_or(rest.len());
    rest[..end].lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect()
}

/// `Subject: ...` line of a rerank prompt.
pub fn prompt_subject(prompt: &str) -> Option<&str> {
    prompt.lines().find_map(|l| l.strip_prefix("Subject: "))
}

pub fn reply(label: &str, negated: bool) -> String {
    format!(
        "{{\"mapped_predicate\": \"{label}\", \"negated\": \"{}\"}}",
        if negated { "True" } else { "False" }
    )
}

/// Small integer-valued vector, so distinct records often tie.
pub fn coarse_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| f64::from(rng.random_range(-2i8..=2))).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// A random store over `labels`, with some `_NEG` records, duplicated
/// vectors and duplicated texts across labels.
pub fn random_store(
    rng: &mut ChaCha8Rng,
    model_id: &str,
    role: StoreRole,
    labels: &[String],
    n: usize,
    dim: usize,
) -> Store {
    let mut raw: Vec<RawRecord<f64>> = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    while raw.len() < n {
        let base = &labels[rng.random_range(0..labels.len())];
        let negative = rng.random_bool(0.3);
        let label = if negative { negative_label(base) } else { base.clone() };
        let text = format!("d{}", rng.random_range(0..(n * 2)));
        if !seen.insert((label.clone(), text.clone())) {
            continue;
        }
        let values = if !raw.is_empty() && rng.random_bool(0.15) {
            raw[rng.random_range(0..raw.len())].values.clone()
        } else {
            coarse_vector(rng, dim)
        };
        raw.push(RawRecord {
            predicate_label: label,
            descriptor_text: text,
            polarity: if negative { Polarity::Negative } else { Polarity::Positive },
            values,
        });
    }
    EmbeddingStore::from_raw(model_id, "random", role, epoch(), raw).unwrap().0
}

/// Synthetic relations whose text paraphrases catalog descriptors. Every
/// `negate_every`-th relation carries a negation cue.
pub fn synthetic_relations(catalog: &PredicateCatalog, n: usize, negate_every: usize) -> Vec<ExtractedRelation> {
    let positives: Vec<_> = catalog.descriptors_with(Polarity::Positive).collect();
    (0..n)
        .map(|i| {
            let d = positives[(i * 7) % positives.len()];
            let text = if negate_every > 0 && i % negate_every == 0 {
                format!("does not {}", d.text)
            } else if i % 3 == 1 {
                format!("strongly {}", d.text)
            } else {
                d.text.clone()
            };
            let subject = format!("chem-{i:04}");
            let object = format!("prot-{i:04}");
            let abstract_text = format!("We report that {subject} {text} {object} in vitro.");
            ExtractedRelation::new(format!("r{i:04}"), subject, object, text, abstract_text)
        })
        .collect()
}

pub fn write_relations(path: &Path, relations: &[ExtractedRelation]) {
    fs::write(path, predmap_core::jsonl::to_lines(relations)).unwrap();
}
