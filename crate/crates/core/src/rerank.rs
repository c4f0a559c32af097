//! Contextual selection of one candidate predicate by an LLM.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{ProviderError, RerankError};
use crate::providers::ChatClient;
use crate::retrieval::{CandidateSet, ExtractedRelation};
use crate::scalar::Scalar;

pub(crate) const RELATIONSHIP_MARKER: &str = "Original Relationship: ";
pub(crate) const CANDIDATES_HEADER: &str = "Candidate Predicates:\n";
pub(crate) const INSTRUCTIONS_HEADER: &str = "\n\nInstructions:";

const RERANK_TEMPLATE: &str = r#"You are an expert in biomedical relationships. Based on the text below:

Subject: {subject}
Object: {object}
Original Relationship: {relationship}
Abstract: {abstract}

Candidate Predicates:
{choices_str}

Instructions:
- Choose the best predicate from the list that matches the intended meaning and direction.
- If the original relationship implies negation (e.g., "does not cause"), select the matching base predicate, but set "negated" to "True".
- If no match exists, return `"mapped_predicate": "none"`.

Respond with ONLY this JSON object:
{"mapped_predicate": "one of the predicate keys or 'none'", "negated": "True" or "False"}"#;

const SLOTS: &[&str] = &["subject", "object", "relationship", "abstract", "choices_str"];

const REPAIR_SUFFIX: &str = "\n\nYour previous reply could not be parsed. Respond with ONLY the JSON object described above, with no other text.";

pub const MAPPED_PREDICATE_KEY: &str = "mapped_predicate";
pub const NEGATED_KEY: &str = "negated";

pub fn rerank_template() -> &'static str {
    RERANK_TEMPLATE
}

/// Single-pass slot substitution: text inserted for one slot is never
/// scanned for further slots.
fn fill_slots(template: &str, values: &[&str; 5]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let hit = SLOTS.iter().position(|slot| {
            tail.strip_prefix(slot).is_some_and(|after| after.starts_with('}'))
        });
        match hit {
            Some(i) => {
                out.push_str(values[i]);
                rest = &tail[SLOTS[i].len() + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Renders the rerank prompt. Candidates are listed one base label per
/// line, in candidate order.
pub fn build_rerank_prompt<S: Scalar>(
    relation: &ExtractedRelation,
    candidates: &CandidateSet<S>,
) -> Result<String, RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::PromptContractViolation(format!(
            "relation `{}` has no candidates",
            relation.relation_id
        )));
    }
    let choices = candidates.labels().join("\n");
    Ok(fill_slots(
        RERANK_TEMPLATE,
        &[
            &relation.subject,
            &relation.object,
            &relation.relation_text,
            &relation.abstract_text,
            &choices,
        ],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingOutcome {
    Mapped,
    RejectedNone,
    ParseFailure,
    InvalidSelection,
}

/// Final decision for one relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub relation_id: String,
    /// Present exactly when `outcome` is `Mapped`.
    pub mapped_predicate: Option<String>,
    pub negated: bool,
    pub outcome: MappingOutcome,
    pub candidate_count: usize,
    pub raw_response: String,
    #[serde(with = "millis")]
    pub latency: Duration,
    pub llm_calls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl MappingResult {
    pub fn raw_response_digest(&self) -> String {
        hex::encode(Sha256::digest(self.raw_response.as_bytes()))
    }

    fn unmapped(relation_id: &str, outcome: MappingOutcome, candidate_count: usize) -> Self {
        Self {
            relation_id: relation_id.to_owned(),
            mapped_predicate: None,
            negated: false,
            outcome,
            candidate_count,
            raw_response: String::new(),
            latency: Duration::ZERO,
            llm_calls: 0,
            error: None,
        }
    }

    /// Result for a relation that failed before reranking (e.g. retrieval).
    pub fn failed(relation_id: &str, candidate_count: usize, error: String) -> Self {
        Self {
            error: Some(error),
            ..Self::unmapped(relation_id, MappingOutcome::ParseFailure, candidate_count)
        }
    }
}

/// How a parsed response reads against the offered labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Mapped { label: String, negated: bool },
    RejectedNone,
    OffList(String),
    Malformed(String),
}

fn parse_bool_flag(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::String(s) if s.trim().eq_ignore_ascii_case("true") => Some(true),
        Value::String(s) if s.trim().eq_ignore_ascii_case("false") => Some(false),
        _ => None,
    }
}

/// Matches the response's `mapped_predicate` against `offered`: exact first,
/// then a unique case-insensitive match. Never returns a label that is not
/// in `offered`.
pub fn interpret_selection(parsed: Option<&Map<String, Value>>, offered: &[&str]) -> Selection {
    let Some(map) = parsed else {
        return Selection::Malformed("response holds no JSON object".into());
    };
    let Some(label) = map.get(MAPPED_PREDICATE_KEY).and_then(Value::as_str) else {
        return Selection::Malformed(format!("missing string field `{MAPPED_PREDICATE_KEY}`"));
    };
    let Some(negated) = map.get(NEGATED_KEY).and_then(parse_bool_flag) else {
        return Selection::Malformed(format!("`{NEGATED_KEY}` is missing or not True/False"));
    };
    let label = label.trim();
    if label.eq_ignore_ascii_case("none") {
        return Selection::RejectedNone;
    }
    if let Some(&hit) = offered.iter().find(|&&o| o == label) {
        return Selection::Mapped { label: hit.to_owned(), negated };
    }
    let mut folded = offered.iter().filter(|o| o.eq_ignore_ascii_case(label));
    match (folded.next(), folded.next()) {
        (Some(&hit), None) => Selection::Mapped { label: hit.to_owned(), negated },
        _ => Selection::OffList(label.to_owned()),
    }
}

/// Asks `llm` to pick one of `candidates` for `relation`.
///
/// Never fails: transport errors and unparseable replies become a
/// `ParseFailure` outcome. A malformed reply is retried once with a repair
/// instruction appended. An empty candidate set short-circuits to
/// `RejectedNone` without calling the model.
pub fn select_predicate<S: Scalar>(
    relation: &ExtractedRelation,
    candidates: &CandidateSet<S>,
    llm: &ChatClient,
) -> MappingResult {
    let started = Instant::now();
    let count = candidates.len();
    let prompt = match build_rerank_prompt(relation, candidates) {
        Ok(p) => p,
        Err(_) => return MappingResult::unmapped(&relation.relation_id, MappingOutcome::RejectedNone, 0),
    };
    let offered = candidates.labels();
    let mut result = MappingResult::unmapped(&relation.relation_id, MappingOutcome::ParseFailure, count);

    for attempt in 0..2 {
        let text = if attempt == 0 {
            prompt.clone()
        } else {
            format!("{prompt}{REPAIR_SUFFIX}")
        };
        let exchange = match llm.chat_complete(&text) {
            Ok(ex) => ex,
            Err(e) => {
                result.llm_calls += match &e {
                    ProviderError::RetriesExhausted { attempts, .. } => *attempts,
                    _ => 1,
                };
                result.error = Some(e.to_string());
                break;
            }
        };
        result.llm_calls += exchange.attempt_count;
        result.raw_response = exchange.raw_response;
        match interpret_selection(exchange.parsed_json.as_ref(), &offered) {
            Selection::Malformed(reason) => {
                result.error = Some(reason);
                continue;
            }
            Selection::RejectedNone => {
                result.outcome = MappingOutcome::RejectedNone;
            }
            Selection::OffList(label) => {
                result.outcome = MappingOutcome::InvalidSelection;
                result.error = Some(format!("`{label}` was not offered"));
            }
            Selection::Mapped { label, negated } => {
                result.outcome = MappingOutcome::Mapped;
                result.mapped_predicate = Some(label);
                result.negated = negated;
            }
        }
        if result.outcome != MappingOutcome::ParseFailure {
            if result.outcome != MappingOutcome::InvalidSelection {
                result.error = None;
            }
            break;
        }
    }
    result.latency = started.elapsed();
    result
}
