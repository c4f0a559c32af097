use serde::{Deserialize, Serialize};

use crate::scalar::{self, Scalar};

/// A dense embedding tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EmbeddingVector<S> {
    values: Vec<S>,
    model_id: String,
}

impl<S: Scalar> EmbeddingVector<S> {
    /// Returns `None` when `values` is empty or holds a non-finite entry.
    pub fn new(values: Vec<S>, model_id: impl Into<String>) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn norm(&self) -> S {
        scalar::l2_norm(&self.values)
    }

    /// Unit-length copy, or `None` for a zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let norm = self.norm();
        if norm == S::zero() || !norm.is_finite() {
            return None;
        }
        Some(Self {
            values: self.values.iter().map(|&v| v / norm).collect(),
            model_id: self.model_id.clone(),
        })
    }

    pub fn cosine(&self, other: &Self) -> S {
        scalar::cosine(&self.values, &other.values)
    }

    pub fn dot(&self, other: &Self) -> S {
        scalar::dot(&self.values, &other.values)
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }
}
