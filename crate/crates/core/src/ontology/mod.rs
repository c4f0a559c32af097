//! Predicate catalogs and negated-descriptor generation.

mod catalog;
mod negation;

pub use catalog::{
    base_label, negative_label, Descriptor, DescriptorCount, Ontology, Polarity, Predicate,
    PredicateCatalog, NEG_SUFFIX,
};
pub use negation::{
    build_negation_prompt, generate_negations, negation_template, parse_negation_response,
    write_skip_report, NegationOutcome, NegationSkip, SkipReason, NEGATION_RESPONSE_KEY,
    NOT_ENOUGH_INFORMATION,
};
pub(crate) use negation::{NEGATION_INPUT_MARKER, NEGATION_PROMPT_MARKER};
