use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CatalogError};

/// Suffix marking the predicate that holds negated descriptors.
pub const NEG_SUFFIX: &str = "_NEG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ontology {
    Chemprot,
    Biolink,
    Custom,
}

impl fmt::Display for Ontology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ontology::Chemprot => "chemprot",
            Ontology::Biolink => "biolink",
            Ontology::Custom => "custom",
        })
    }
}

impl std::str::FromStr for Ontology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "chemprot" => Ok(Self::Chemprot),
            "biolink" => Ok(Self::Biolink),
            "custom" => Ok(Self::Custom),
            other => Err(format!("unknown ontology `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Label of the negated counterpart of `base`.
pub fn negative_label(base: &str) -> String {
    format!("{base}{NEG_SUFFIX}")
}

/// Strips the negation suffix, if any.
pub fn base_label(label: &str) -> &str {
    label.strip_suffix(NEG_SUFFIX).unwrap_or(label)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub label: String,
    pub ontology: Ontology,
    pub is_negative_variant: bool,
    pub base_label: String,
}

impl Predicate {
    pub fn new(label: impl Into<String>, ontology: Ontology) -> Self {
        let label = label.into();
        let base = base_label(&label).to_owned();
        Self {
            is_negative_variant: base != label,
            base_label: base,
            label,
            ontology,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    pub text: String,
    pub predicate_label: String,
    pub polarity: Polarity,
    pub source: String,
}

/// Predicate set of one ontology with its descriptor texts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateCatalog {
    pub ontology: Ontology,
    pub version: String,
    pub predicates: Vec<Predicate>,
    pub descriptors: Vec<Descriptor>,
}

/// Positive-descriptor count for one predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorCount {
    pub predicate: String,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    ontology: Ontology,
    version: String,
    predicates: Vec<PredicateEntry>,
    descriptors: Vec<DescriptorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredicateEntry {
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptorEntry {
    predicate: String,
    text: String,
    #[serde(default)]
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polarity: Option<Polarity>,
}

impl PredicateCatalog {
    /// Reads a catalog file and checks every invariant. `expected` must match
    /// the file's `ontology` field.
    pub fn parse_file(path: &Path, expected: Ontology) -> Result<Self, CatalogError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_str(&text, expected, &path.display().to_string())
    }

    pub fn parse_str(text: &str, expected: Ontology, origin: &str) -> Result<Self, CatalogError> {
        let parse_err = |line: Option<usize>, field: &str, message: String| CatalogError::Parse {
            path: origin.to_owned(),
            line,
            field: field.to_owned(),
            message,
        };
        let mut de = serde_json::Deserializer::from_str(text);
        let file: CatalogFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            parse_err(Some(inner.line()), &field, inner.to_string())
        })?;
        if file.ontology != expected {
            return Err(parse_err(
                None,
                "ontology",
                format!("expected `{expected}`, file declares `{}`", file.ontology),
            ));
        }
        if file.predicates.is_empty() {
            return Err(parse_err(None, "predicates", "predicate list is empty".into()));
        }
        for (i, p) in file.predicates.iter().enumerate() {
            if p.label.trim().is_empty() {
                return Err(parse_err(None, &format!("predicates[{i}].label"), "blank label".into()));
            }
        }
        for (i, d) in file.descriptors.iter().enumerate() {
            if d.text.trim().is_empty() {
                return Err(parse_err(None, &format!("descriptors[{i}].text"), "blank text".into()));
            }
        }

        let ontology = file.ontology;
        let catalog = Self {
            ontology,
            version: file.version,
            predicates: file
                .predicates
                .into_iter()
                .map(|p| Predicate::new(p.label, ontology))
                .collect(),
            descriptors: file
                .descriptors
                .into_iter()
                .map(|d| {
                    let polarity = d.polarity.unwrap_or(if base_label(&d.predicate) != d.predicate {
                        Polarity::Negative
                    } else {
                        Polarity::Positive
                    });
                    Descriptor {
                        text: d.text,
                        predicate_label: d.predicate,
                        polarity,
                        source: d.source,
                    }
                })
                .collect(),
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let integrity = |msg: String| Err(CatalogError::Integrity(msg));
        if self.predicates.is_empty() {
            return integrity("catalog has no predicates".into());
        }
        let mut by_label: HashMap<&str, &Predicate> = HashMap::new();
        for p in &self.predicates {
            if by_label.insert(&p.label, p).is_some() {
                return integrity(format!("duplicate predicate label `{}`", p.label));
            }
            let expected_neg = p.label != p.base_label;
            if p.is_negative_variant != expected_neg
                || (p.is_negative_variant && p.label != negative_label(&p.base_label))
            {
                return integrity(format!("predicate `{}` has inconsistent negation fields", p.label));
            }
        }
        for p in self.predicates.iter().filter(|p| p.is_negative_variant) {
            if !by_label.contains_key(p.base_label.as_str()) {
                return integrity(format!(
                    "negative predicate `{}` has no base predicate `{}`",
                    p.label, p.base_label
                ));
            }
        }

        let mut seen = HashSet::new();
        let mut positives: HashMap<&str, usize> = HashMap::new();
        for d in &self.descriptors {
            let Some(p) = by_label.get(d.predicate_label.as_str()) else {
                return integrity(format!(
                    "descriptor `{}` refers to unknown predicate `{}`",
                    d.text, d.predicate_label
                ));
            };
            if d.text.trim().is_empty() {
                return integrity(format!("blank descriptor under `{}`", d.predicate_label));
            }
            if p.is_negative_variant != (d.polarity == Polarity::Negative) {
                return integrity(format!(
                    "descriptor `{}` has {:?} polarity but predicate `{}` disagrees",
                    d.text, d.polarity, p.label
                ));
            }
            if !seen.insert((d.predicate_label.as_str(), d.text.as_str())) {
                return integrity(format!(
                    "duplicate descriptor `{}` under `{}`",
                    d.text, d.predicate_label
                ));
            }
            if d.polarity == Polarity::Positive {
                *positives.entry(&d.predicate_label).or_default() += 1;
            }
        }
        if let Some(p) = self
            .predicates
            .iter()
            .find(|p| !p.is_negative_variant && !positives.contains_key(p.label.as_str()))
        {
            return integrity(format!("predicate `{}` has no positive descriptor", p.label));
        }
        Ok(())
    }

    pub fn predicate(&self, label: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.label == label)
    }

    /// Labels of the non-negated predicates, in catalog order.
    pub fn base_labels(&self) -> impl Iterator<Item = &str> {
        self.predicates
            .iter()
            .filter(|p| !p.is_negative_variant)
            .map(|p| p.label.as_str())
    }

    pub fn descriptors_with(&self, polarity: Polarity) -> impl Iterator<Item = &Descriptor> {
        self.descriptors.iter().filter(move |d| d.polarity == polarity)
    }

    /// Positive descriptor counts per base predicate, largest first
    /// (ties by label), with each count's share of all positive descriptors.
    pub fn descriptor_counts(&self) -> Vec<DescriptorCount> {
        let mut counts: BTreeMap<&str, usize> = self.base_labels().map(|l| (l, 0)).collect();
        for d in self.descriptors_with(Polarity::Positive) {
            *counts.entry(&d.predicate_label).or_default() += 1;
        }
        let total: usize = counts.values().sum();
        let mut rows: Vec<DescriptorCount> = counts
            .into_iter()
            .map(|(predicate, count)| DescriptorCount {
                predicate: predicate.to_owned(),
                count,
                percentage: if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                },
            })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.predicate.cmp(&b.predicate)));
        rows
    }

    /// Serializes in the catalog file format, with explicit polarity on every
    /// descriptor.
    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            ontology: self.ontology,
            version: self.version.clone(),
            predicates: self
                .predicates
                .iter()
                .map(|p| PredicateEntry {
                    label: p.label.clone(),
                })
                .collect(),
            descriptors: self
                .descriptors
                .iter()
                .map(|d| DescriptorEntry {
                    predicate: d.predicate_label.clone(),
                    text: d.text.clone(),
                    source: d.source.clone(),
                    polarity: Some(d.polarity),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("catalog serializes");
        out.push('\n');
        out
    }

    pub fn write_file(&self, path: &Path) -> Result<(), CatalogError> {
        fs::write(path, self.to_json()).map_err(io_err(path))?;
        Ok(())
    }
}
