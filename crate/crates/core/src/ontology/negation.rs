//! LLM-generated negated descriptors.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{negative_label, Descriptor, Polarity, Predicate, PredicateCatalog};
use crate::error::{io_err, CatalogError};
use crate::providers::ChatClient;

pub const NEGATION_RESPONSE_KEY: &str = "negation_of_the_descriptor_text";
pub const NOT_ENOUGH_INFORMATION: &str = "NOT ENOUGH INFORMATION";
pub(crate) const NEGATION_PROMPT_MARKER: &str = "extracting negations of ontological predicates";
pub(crate) const NEGATION_INPUT_MARKER: &str = "Input: \"";

const DESCRIPTOR_SLOT: &str = "{descriptor_text}";

// Rule numbering (1, 3, 4, 4) is kept exactly as the prompt was published.
const NEGATION_TEMPLATE: &str = r#"You are a biomedical researcher extracting negations of ontological predicates.

Your Task:
Given a description, return its natural negation.

Rules:
1. Preserve the meaning but negate the entire description.
3. Do not summarize or change the structure of the descriptor text.
4. If there is not enough information to create a negation, your response should be "NOT ENOUGH INFORMATION"
4. Only return the negation—no explanations or extra text.

Examples:
- "has effect" → "does not have effect"
- "during which ends" → "during which does not ends"
- "happens during" → "does not happen during"

Input: "{descriptor_text}"

Output: A JSON object with these exact keys and format:
{"negation_of_the_descriptor_text": "negated version" or "NOT ENOUGH INFORMATION"}"#;

/// The negation prompt template with its `{descriptor_text}` slot unfilled.
pub fn negation_template() -> &'static str {
    NEGATION_TEMPLATE
}

/// Fills the negation template with `text`, verbatim.
pub fn build_negation_prompt(text: &str) -> String {
    NEGATION_TEMPLATE.replacen(DESCRIPTOR_SLOT, text, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NotEnoughInformation,
    InvalidResponse,
    ProviderFailure,
}

/// A positive descriptor for which no negation was added.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationSkip {
    pub predicate: String,
    pub text: String,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct NegationOutcome {
    pub catalog: PredicateCatalog,
    pub skips: Vec<NegationSkip>,
    pub attempted: usize,
    pub added: usize,
}

/// Interprets one negation response. `Err` carries the skip reason.
pub fn parse_negation_response(
    source_text: &str,
    raw_response: &str,
    parsed: Option<&serde_json::Map<String, serde_json::Value>>,
) -> Result<String, (SkipReason, String)> {
    let is_nei = |s: &str| {
        s.trim()
            .trim_matches(|c: char| c == '"' || c == '.')
            .eq_ignore_ascii_case(NOT_ENOUGH_INFORMATION)
    };
    let Some(map) = parsed else {
        if is_nei(raw_response) {
            return Err((SkipReason::NotEnoughInformation, raw_response.trim().to_owned()));
        }
        return Err((SkipReason::InvalidResponse, "response holds no JSON object".into()));
    };
    let Some(value) = map.get(NEGATION_RESPONSE_KEY).and_then(|v| v.as_str()) else {
        return Err((
            SkipReason::InvalidResponse,
            format!("missing string field `{NEGATION_RESPONSE_KEY}`"),
        ));
    };
    let negation = value.trim();
    if is_nei(negation) {
        return Err((SkipReason::NotEnoughInformation, negation.to_owned()));
    }
    if negation.is_empty() {
        return Err((SkipReason::InvalidResponse, "empty negation".into()));
    }
    if negation == source_text.trim() {
        return Err((SkipReason::InvalidResponse, "negation repeats the source text".into()));
    }
    Ok(negation.to_owned())
}

/// Asks `llm` to negate every positive descriptor and appends the accepted
/// negations under `<label>_NEG` predicates.
///
/// Individual failures are recorded as skips. More than half of the
/// descriptors skipped is an error. Re-running on an augmented catalog adds
/// no duplicate descriptors.
pub fn generate_negations(
    catalog: &PredicateCatalog,
    llm: &ChatClient,
) -> Result<NegationOutcome, CatalogError> {
    catalog.validate()?;
    let positives: Vec<&Descriptor> = catalog.descriptors_with(Polarity::Positive).collect();

    let responses: Vec<Result<String, (SkipReason, String)>> = positives
        .par_iter()
        .map(|d| match llm.chat_complete(&build_negation_prompt(&d.text)) {
            Ok(ex) => parse_negation_response(&d.text, &ex.raw_response, ex.parsed_json.as_ref()),
            Err(e) => Err((SkipReason::ProviderFailure, e.to_string())),
        })
        .collect();

    let mut out = catalog.clone();
    let mut known: HashSet<(String, String)> = out
        .descriptors
        .iter()
        .map(|d| (d.predicate_label.clone(), d.text.clone()))
        .collect();
    let mut skips = Vec::new();
    let mut added = 0;
    for (source, response) in positives.iter().zip(responses) {
        match response {
            Ok(text) => {
                let label = negative_label(&source.predicate_label);
                if out.predicate(&label).is_none() {
                    out.predicates.push(Predicate::new(label.clone(), catalog.ontology));
                }
                if known.insert((label.clone(), text.clone())) {
                    out.descriptors.push(Descriptor {
                        text,
                        predicate_label: label,
                        polarity: Polarity::Negative,
                        source: format!("negation:{}", llm.model_id()),
                    });
                    added += 1;
                }
            }
            Err((reason, detail)) => {
                log::info!("skipping negation of `{}`: {detail}", source.text);
                skips.push(NegationSkip {
                    predicate: source.predicate_label.clone(),
                    text: source.text.clone(),
                    reason,
                    detail,
                });
            }
        }
    }

    let attempted = positives.len();
    if skips.len() * 2 > attempted {
        return Err(CatalogError::NegationYield {
            skipped: skips.len(),
            total: attempted,
        });
    }
    out.validate()?;
    Ok(NegationOutcome {
        catalog: out,
        skips,
        attempted,
        added,
    })
}

pub fn write_skip_report(path: &Path, skips: &[NegationSkip]) -> Result<(), CatalogError> {
    let mut body = String::new();
    for skip in skips {
        body.push_str(&serde_json::to_string(skip).expect("skip serializes"));
        body.push('\n');
    }
    fs::write(path, body).map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_substitutes_verbatim() {
        let prompt = build_negation_prompt(r#"the "active" form of"#);
        assert!(prompt.contains(r#"Input: "the "active" form of""#));
        let restored = prompt.replacen(r#"the "active" form of"#, DESCRIPTOR_SLOT, 1);
        assert_eq!(restored, NEGATION_TEMPLATE);
    }

    #[test]
    fn prompt_keeps_rules_and_examples() {
        let prompt = build_negation_prompt("has effect");
        assert!(prompt.contains("Input: \"has effect\""));
        assert!(prompt.contains("- \"has effect\" → \"does not have effect\""));
        assert!(prompt.contains("4. If there is not enough information"));
        assert!(prompt.ends_with(
            r#"{"negation_of_the_descriptor_text": "negated version" or "NOT ENOUGH INFORMATION"}"#
        ));
    }

    #[test]
    fn response_validation() {
        let map = |v: &str| {
            let mut m = serde_json::Map::new();
            m.insert(NEGATION_RESPONSE_KEY.into(), v.into());
            m
        };
        assert_eq!(
            parse_negation_response("has effect", "", Some(&map("does not have effect"))).unwrap(),
            "does not have effect"
        );
        assert_eq!(
            parse_negation_response("has effect", "", Some(&map("NOT ENOUGH INFORMATION")))
                .unwrap_err()
                .0,
            SkipReason::NotEnoughInformation
        );
        assert_eq!(
            parse_negation_response("has effect", "", Some(&map(" has effect ")))
                .unwrap_err()
                .0,
            SkipReason::InvalidResponse
        );
        assert_eq!(
            parse_negation_response("has effect", "", Some(&map("  "))).unwrap_err().0,
            SkipReason::InvalidResponse
        );
        assert_eq!(
            parse_negation_response("has effect", "NOT ENOUGH INFORMATION", None)
                .unwrap_err()
                .0,
            SkipReason::NotEnoughInformation
        );
        assert_eq!(
            parse_negation_response("has effect", "does not have effect", None)
                .unwrap_err()
                .0,
            SkipReason::InvalidResponse
        );
    }
}
