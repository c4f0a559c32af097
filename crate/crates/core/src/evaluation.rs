//! Exact match on final selections; accuracy@k and MRR on the retrieved
//! candidate lists (before reranking).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::EvalError;
use crate::rerank::{MappingOutcome, MappingResult};
use crate::retrieval::CandidateDump;
use crate::scalar::Scalar;

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    #[serde(rename = "id")]
    pub relation_id: String,
    #[serde(rename = "predicate")]
    pub gold_predicate: String,
    #[serde(rename = "negated", default, skip_serializing_if = "Option::is_none")]
    pub gold_negated: Option<bool>,
}

/// A final per-relation decision, as produced by reranking or read back
/// from a results file.
pub trait Decision {
    fn relation_id(&self) -> &str;
    fn outcome(&self) -> MappingOutcome;
    fn mapped_predicate(&self) -> Option<&str>;
    fn negated(&self) -> bool;

    fn selects(&self, predicate: &str) -> bool {
        self.outcome() == MappingOutcome::Mapped && self.mapped_predicate() == Some(predicate)
    }
}

impl Decision for MappingResult {
    fn relation_id(&self) -> &str {
        &self.relation_id
    }
    fn outcome(&self) -> MappingOutcome {
        self.outcome
    }
    fn mapped_predicate(&self) -> Option<&str> {
        self.mapped_predicate.as_deref()
    }
    fn negated(&self) -> bool {
        self.negated
    }
}

/// Ordered candidate labels per relation id.
pub type CandidateLists = HashMap<String, Vec<String>>;

pub fn candidate_lists<S: Scalar>(dumps: &[CandidateDump<S>]) -> Result<CandidateLists, EvalError> {
    let mut lists = CandidateLists::with_capacity(dumps.len());
    for dump in dumps {
        let mut ordered: Vec<_> = dump.candidates.iter().collect();
        ordered.sort_by_key(|c| c.rank);
        let labels = ordered.into_iter().map(|c| c.label.clone()).collect();
        if lists.insert(dump.id.clone(), labels).is_some() {
            return Err(EvalError::Input(format!("duplicate candidate list for `{}`", dump.id)));
        }
    }
    Ok(lists)
}

fn check_gold(gold: &[GoldPair]) -> Result<(), EvalError> {
    if gold.is_empty() {
        return Err(EvalError::Input("gold set is empty".into()));
    }
    Ok(())
}

/// 1-based rank of the gold predicate per gold pair; `None` when absent.
fn gold_ranks(lists: &CandidateLists, gold: &[GoldPair]) -> Result<Vec<Option<usize>>, EvalError> {
    check_gold(gold)?;
    gold.iter()
        .map(|g| {
            let list = lists.get(&g.relation_id).ok_or_else(|| {
                EvalError::Input(format!("no candidate list for relation `{}`", g.relation_id))
            })?;
            Ok(list.iter().position(|l| *l == g.gold_predicate).map(|p| p + 1))
        })
        .collect()
}

fn results_by_id<D: Decision>(results: &[D]) -> Result<HashMap<&str, &D>, EvalError> {
    let mut map = HashMap::with_capacity(results.len());
    for r in results {
        if map.insert(r.relation_id(), r).is_some() {
            return Err(EvalError::Input(format!("duplicate result for `{}`", r.relation_id())));
        }
    }
    Ok(map)
}

/// Fraction of gold pairs whose final mapping is the gold predicate.
/// Rejections and failures count as misses.
pub fn exact_match<S: Scalar, D: Decision>(results: &[D], gold: &[GoldPair]) -> Result<S, EvalError> {
    check_gold(gold)?;
    let by_id = results_by_id(results)?;
    let mut hits = 0;
    for g in gold {
        let r = by_id
            .get(g.relation_id.as_str())
            .ok_or_else(|| EvalError::Input(format!("no result for relation `{}`", g.relation_id)))?;
        if r.selects(&g.gold_predicate) {
            hits += 1;
        }
    }
    Ok(S::ratio(hits, gold.len()))
}

/// Fraction of relations whose gold predicate is among the first `k`
/// candidates, for each `k` in `ks`.
pub fn accuracy_at_k<S: Scalar>(
    lists: &CandidateLists,
    gold: &[GoldPair],
    ks: &[usize],
) -> Result<BTreeMap<usize, S>, EvalError> {
    if let Some(bad) = ks.iter().find(|&&k| k == 0) {
        return Err(EvalError::Input(format!("k must be >= 1, got {bad}")));
    }
    let ranks = gold_ranks(lists, gold)?;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            (k, S::ratio(hits, ranks.len()))
        })
        .collect())
}

/// Mean of `1 / rank` of the gold predicate, counting 0 when absent.
pub fn mrr<S: Scalar>(lists: &CandidateLists, gold: &[GoldPair]) -> Result<S, EvalError> {
    let ranks = gold_ranks(lists, gold)?;
    let sum = ranks
        .iter()
        .flatten()
        .fold(S::zero(), |acc, &r| acc + S::one() / S::from_usize(r).unwrap_or_else(S::nan));
    Ok(sum / S::from_usize(ranks.len()).unwrap_or_else(S::nan))
}

/// Fraction of gold pairs found anywhere in their candidate list.
pub fn coverage<S: Scalar>(lists: &CandidateLists, gold: &[GoldPair]) -> Result<S, EvalError> {
    let ranks = gold_ranks(lists, gold)?;
    Ok(S::ratio(ranks.iter().flatten().count(), ranks.len()))
}

/// Agreement of the negation flag with gold, over gold pairs that carry a
/// flag and were mapped to the gold predicate. `None` when there are none.
pub fn negation_agreement<S: Scalar, D: Decision>(
    results: &[D],
    gold: &[GoldPair],
) -> Result<Option<(S, usize)>, EvalError> {
    let by_id = results_by_id(results)?;
    let mut agree = 0;
    let mut n = 0;
    for g in gold {
        let (Some(flag), Some(r)) = (g.gold_negated, by_id.get(g.relation_id.as_str())) else {
            continue;
        };
        if r.selects(&g.gold_predicate) {
            n += 1;
            agree += usize::from(r.negated() == flag);
        }
    }
    Ok((n > 0).then(|| (S::ratio(agree, n), n)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<S> {
    pub n: usize,
    pub exact_match: S,
    pub accuracy_at: BTreeMap<usize, S>,
    pub mrr: S,
    pub coverage: S,
    pub negation_accuracy: Option<(S, usize)>,
}

impl<S: Scalar> MetricsReport<S> {
    /// a@k non-decreasing in k, and a@1 <= MRR <= coverage.
    pub fn orderings_hold(&self) -> bool {
        let slack = S::from_f64_lossy(1e-12);
        let values: Vec<S> = self.accuracy_at.values().copied().collect();
        let monotone = values.windows(2).all(|w| w[0] <= w[1] + slack);
        let lower = self.accuracy_at.get(&1).is_none_or(|&a1| a1 <= self.mrr + slack);
        monotone && lower && self.mrr <= self.coverage + slack
    }

    /// JSON document keyed by the usual column names
    /// (`Exact Match`, `a@k`, `MRR`).
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("n".into(), json!(self.n));
        map.insert("Exact Match".into(), json!(self.exact_match.to_f64_lossy()));
        for (k, v) in &self.accuracy_at {
            map.insert(format!("a@{k}"), json!(v.to_f64_lossy()));
        }
        map.insert("MRR".into(), json!(self.mrr.to_f64_lossy()));
        map.insert("coverage".into(), json!(self.coverage.to_f64_lossy()));
        match &self.negation_accuracy {
            Some((acc, n)) => {
                map.insert("negation_accuracy".into(), json!(acc.to_f64_lossy()));
                map.insert("negation_n".into(), json!(n));
            }
            None => {
                map.insert("negation_accuracy".into(), Value::Null);
                map.insert("negation_n".into(), json!(0));
            }
        }
        map.insert("orderings_hold".into(), json!(self.orderings_hold()));
        Value::Object(map)
    }
}

pub fn evaluate<S: Scalar, D: Decision>(
    results: &[D],
    lists: &CandidateLists,
    gold: &[GoldPair],
    ks: &[usize],
) -> Result<MetricsReport<S>, EvalError> {
    Ok(MetricsReport {
        n: gold.len(),
        exact_match: exact_match(results, gold)?,
        accuracy_at: accuracy_at_k(lists, gold, ks)?,
        mrr: mrr(lists, gold)?,
        coverage: coverage(lists, gold)?,
        negation_accuracy: negation_agreement(results, gold)?,
    })
}
