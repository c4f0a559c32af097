//! Floating-point abstraction used by vectors, scores and metrics.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the retrieval and evaluation math is written against.
///
/// Implemented for `f32` and `f64`. Embedding providers speak `f64` on the
/// wire; stores convert into their scalar on ingest.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Allowed deviation of a stored vector's L2 norm from 1.
    const NORM_TOLERANCE: Self;

    /// Short name recorded in store manifests.
    const NAME: &'static str;

    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn ratio(numerator: usize, denominator: usize) -> Self {
        if denominator == 0 {
            return Self::zero();
        }
        Self::from_usize(numerator).unwrap_or_else(Self::nan)
            / Self::from_usize(denominator).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {
    const NORM_TOLERANCE: Self = 1e-5;
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NORM_TOLERANCE: Self = 1e-9;
    const NAME: &'static str = "f64";
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (&x, &y)| x.mul_add(y, acc))
}

pub(crate) fn l2_norm<S: Scalar>(values: &[S]) -> S {
    dot(values, values).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`. Zero when either side has zero norm.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == S::zero() {
        return S::zero();
    }
    (dot(a, b) / denom).max(-S::one()).min(S::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_handles_zero_denominator() {
        assert_eq!(<f64 as Scalar>::ratio(3, 0), 0.0);
        assert_eq!(<f64 as Scalar>::ratio(1, 4), 0.25);
        assert_eq!(<f32 as Scalar>::ratio(1, 2), 0.5);
    }

    #[test]
    fn cosine_matches_definition() {
        let a = [1.0f64, 2.0, 3.0];
        let b = [-2.0f64, 0.5, 4.0];
        let expected = (1.0 * -2.0 + 2.0 * 0.5 + 3.0 * 4.0)
            / ((1.0f64 + 4.0 + 9.0).sqrt() * (4.0f64 + 0.25 + 16.0).sqrt());
        assert!((cosine(&a, &b) - expected).abs() < 1e-15);
        assert_eq!(cosine(&a, &[0.0; 3]), 0.0);
    }
}
