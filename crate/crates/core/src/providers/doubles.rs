//! Offline stand-ins for model services.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatBackend, EmbeddingBackend};
use crate::error::{ProviderError, TransportError};
use crate::ontology::{NEGATION_INPUT_MARKER, NEGATION_PROMPT_MARKER, NOT_ENOUGH_INFORMATION};
use crate::rerank::{CANDIDATES_HEADER, INSTRUCTIONS_HEADER, RELATIONSHIP_MARKER};

/// Hashed bag-of-words embedder.
///
/// Each lower-cased alphanumeric token is hashed together with the seed to a
/// single signed bucket; the bucket counts are L2-normalized. Vectors are a
/// pure function of `(seed, text)`.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    seed: u64,
    dim: usize,
    model_id: String,
}

impl DeterministicEmbedder {
    pub const MIN_DIM: usize = 8;

    pub fn new(seed: u64, dim: usize) -> Result<Self, ProviderError> {
        Self::with_model_id(seed, dim, format!("hash-bow-{dim}"))
    }

    pub fn with_model_id(seed: u64, dim: usize, model_id: String) -> Result<Self, ProviderError> {
        if dim < Self::MIN_DIM {
            return Err(ProviderError::InvalidConfig(format!(
                "deterministic embedder needs dim >= {}, got {dim}",
                Self::MIN_DIM
            )));
        }
        Ok(Self { seed, dim, model_id })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokenize(text: &str) -> Vec<String> {
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        if tokens.is_empty() && !text.trim().is_empty() {
            return vec![text.trim().to_owned()];
        }
        tokens
    }

    /// Bucket index and sign a token contributes to.
    pub fn token_bucket(&self, token: &str) -> (usize, f64) {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(token.as_bytes())
            .finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        let bucket = (u64::from_le_bytes(head) % self.dim as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut values = vec![0.0f64; self.dim];
        for token in Self::tokenize(text) {
            let (bucket, sign) = self.token_bucket(&token);
            values[bucket] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        values
    }
}

impl EmbeddingBackend for DeterministicEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

type Responder = dyn Fn(&str, usize) -> Result<String, TransportError> + Send + Sync;

/// Chat double driven by a closure of `(prompt, call_index)`.
pub struct ScriptedChat {
    model_id: String,
    responder: Box<Responder>,
    calls: AtomicUsize,
}

/// One line of a scripted-chat rule file: the first rule whose `contains`
/// occurs in the prompt supplies the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub contains: String,
    pub response: String,
}

impl ScriptedChat {
    pub fn new(
        model_id: impl Into<String>,
        responder: impl Fn(&str, usize) -> Result<String, TransportError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn always(response: impl Into<String>) -> Self {
        let response = response.into();
        Self::new("scripted", move |_, _| Ok(response.clone()))
    }

    /// Replays `responses` in call order, repeating the last one.
    pub fn sequence(responses: Vec<Result<String, TransportError>>) -> Self {
        assert!(!responses.is_empty(), "sequence needs at least one response");
        Self::new("scripted", move |_, call| {
            responses[call.min(responses.len() - 1)].clone()
        })
    }

    pub fn from_rules(model_id: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        Self::new(model_id, move |prompt, _| {
            rules
                .iter()
                .find(|r| prompt.contains(&r.contains))
                .map(|r| r.response.clone())
                .ok_or_else(|| TransportError::new("no scripted response matches the prompt"))
        })
    }

    pub fn from_rule_file(model_id: String, path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| {
            ProviderError::InvalidConfig(format!("cannot read script {}: {e}", path.display()))
        })?;
        let rules = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                serde_json::from_str::<ScriptRule>(line).map_err(|e| {
                    ProviderError::InvalidConfig(format!("{}:{}: {e}", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_rules(model_id, rules))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn send(&self, prompt: &str) -> Result<String, TransportError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.responder)(prompt, call)
    }
}

/// Rule-based chat double that understands both pipeline prompts.
///
/// Negation prompts get a syntactic negation of the input descriptor.
/// Rerank prompts get the candidate sharing the most tokens with the
/// relationship text (first listed on ties), flagged as negated when the
/// relationship carries a negation cue.
#[derive(Debug, Clone)]
pub struct OfflineChat {
    model_id: String,
}

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "can", "could", "may", "might", "will", "would", "should", "has",
    "have", "had", "does", "do", "did", "must",
];

const NEGATION_CUES: &[&str] = &[
    "not", "no", "never", "neither", "nor", "fails", "failed", "fail", "unable", "without",
    "lacks", "absence", "cannot",
];

impl OfflineChat {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
        }
    }

    pub fn negate(text: &str) -> Option<String> {
        let text = text.trim();
        if text.chars().filter(|c| c.is_alphanumeric()).count() < 3 {
            return None;
        }
        let mut words = text.split_whitespace();
        let first = words.next()?;
        if AUXILIARIES.contains(&first.to_lowercase().as_str()) {
            let rest: Vec<&str> = words.collect();
            let mut out = format!("{first} not");
            if !rest.is_empty() {
                out.push(' ');
                out.push_str(&rest.join(" "));
            }
            Some(out)
        } else {
            Some(format!("does not {text}"))
        }
    }

    fn answer_negation(prompt: &str) -> Option<String> {
        let start = prompt.find(NEGATION_INPUT_MARKER)? + NEGATION_INPUT_MARKER.len();
        let rest = &prompt[start..];
        let end = rest.rfind("\"\n\nOutput:")?;
        let negation = Self::negate(&rest[..end]).unwrap_or_else(|| NOT_ENOUGH_INFORMATION.into());
        Some(serde_json::json!({ "negation_of_the_descriptor_text": negation }).to_string())
    }

    fn answer_rerank(prompt: &str) -> Option<String> {
        let rel_start = prompt.find(RELATIONSHIP_MARKER)? + RELATIONSHIP_MARKER.len();
        let relationship = prompt[rel_start..].lines().next().unwrap_or_default();
        let cand_start = prompt.find(CANDIDATES_HEADER)? + CANDIDATES_HEADER.len();
        let cand_end = prompt[cand_start..].find(INSTRUCTIONS_HEADER)? + cand_start;
        let choices: Vec<&str> = prompt[cand_start..cand_end]
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let rel_tokens = DeterministicEmbedder::tokenize(relationship);
        let negated = rel_tokens
            .iter()
            .any(|t| NEGATION_CUES.contains(&t.as_str()) || t.ends_with("n't"));
        let overlap = |label: &str| {
            DeterministicEmbedder::tokenize(label)
                .iter()
                .filter(|t| rel_tokens.iter().any(|r| r.starts_with(t.as_str()) || t.starts_with(r.as_str())))
                .count()
        };
        let mut best: Option<(&str, usize)> = None;
        for &choice in &choices {
            let score = overlap(choice);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((choice, score));
            }
        }
        let mapped = best.map_or("none", |(c, _)| c);
        let negated = if negated && mapped != "none" { "True" } else { "False" };
        Some(serde_json::json!({ "mapped_predicate": mapped, "negated": negated }).to_string())
    }
}

impl ChatBackend for OfflineChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn send(&self, prompt: &str) -> Result<String, TransportError> {
        let answer = if prompt.contains(NEGATION_PROMPT_MARKER) {
            Self::answer_negation(prompt)
        } else {
            Self::answer_rerank(prompt)
        };
        answer.ok_or_else(|| TransportError::new("offline chat does not recognise this prompt"))
    }
}
