//! Brute-force reference implementations, written without reusing the
//! library's selection, grouping or metric code.

use std::collections::HashMap;

use predmap_core::ontology::Polarity;
use predmap_core::retrieval::{PredicateCandidate, SupportingDescriptor};
use predmap_core::store::EmbeddingRecord;
use predmap_core::Store;

/// Score of one record against `query`, using the store's arithmetic
/// (fused multiply-add accumulation, divided by the query norm) so that
/// scores compare bitwise.
pub fn score(query: &[f64], record: &EmbeddingRecord<f64>) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |acc, (x, y)| x.mul_add(*y, acc));
    let norm = dot(query, query).sqrt();
    (dot(query, record.vector.values()) / norm).clamp(-1.0, 1.0)
}

/// Full sort of every record, then the first `k`.
pub fn top_k<'a>(store: &'a Store, query: &[f64], k: usize) -> Vec<(&'a EmbeddingRecord<f64>, f64)> {
    let mut all: Vec<(usize, &EmbeddingRecord<f64>, f64)> = store
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r, score(query, r)))
        .collect();
    all.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.1.predicate_label.cmp(&b.1.predicate_label))
            .then(a.1.descriptor_text.cmp(&b.1.descriptor_text))
            .then(a.0.cmp(&b.0))
    });
    all.into_iter().take(k).map(|(_, r, s)| (r, s)).collect()
}

fn strip_neg(label: &str) -> &str {
    label.strip_suffix("_NEG").unwrap_or(label)
}

fn sort_support(support: &mut Vec<SupportingDescriptor<f64>>) {
    support.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.text.cmp(&b.text))
            .then(a.polarity.cmp(&b.polarity))
    });
    let mut kept: Vec<SupportingDescriptor<f64>> = Vec::new();
    for s in support.drain(..) {
        if !kept.iter().any(|k| k.text == s.text && k.polarity == s.polarity) {
            kept.push(s);
        }
    }
    *support = kept;
}

fn sort_candidates(candidates: &mut [PredicateCandidate<f64>]) {
    candidates.sort_by(|a, b| b.best_score.total_cmp(&a.best_score).then(a.base_label.cmp(&b.base_label)));
}

/// Groups the top-`k` hits by base label. The first hit of each label is
/// its best because hits arrive sorted.
pub fn collapse(hits: &[(&EmbeddingRecord<f64>, f64)]) -> Vec<PredicateCandidate<f64>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, PredicateCandidate<f64>> = HashMap::new();
    for (pos, (record, score)) in hits.iter().enumerate() {
        let base = strip_neg(&record.predicate_label).to_owned();
        let entry = groups.entry(base.clone()).or_insert_with(|| {
            order.push(base.clone());
            PredicateCandidate {
                base_label: base.clone(),
                best_score: *score,
                best_rank: pos + 1,
                negation_evidence: false,
                supporting_descriptors: Vec::new(),
            }
        });
        if record.polarity == Polarity::Negative {
            entry.negation_evidence = true;
        }
        entry.supporting_descriptors.push(SupportingDescriptor {
            text: record.descriptor_text.clone(),
            polarity: record.polarity,
            score: *score,
        });
    }
    let mut out: Vec<_> = order.into_iter().map(|l| groups.remove(&l).unwrap()).collect();
    for c in &mut out {
        sort_support(&mut c.supporting_descriptors);
    }
    sort_candidates(&mut out);
    out
}

pub fn merge(primary: &[PredicateCandidate<f64>], auxiliary: &[PredicateCandidate<f64>]) -> Vec<PredicateCandidate<f64>> {
    let mut out: Vec<PredicateCandidate<f64>> = primary.to_vec();
    for c in auxiliary {
        match out.iter_mut().find(|o| o.base_label == c.base_label) {
            Some(o) => {
                o.best_score = o.best_score.max(c.best_score);
                o.best_rank = o.best_rank.min(c.best_rank);
                o.negation_evidence = o.negation_evidence || c.negation_evidence;
                o.supporting_descriptors.extend(c.supporting_descriptors.iter().cloned());
            }
            None => out.push(c.clone()),
        }
    }
    for c in &mut out {
        sort_support(&mut c.supporting_descriptors);
    }
    sort_candidates(&mut out);
    out
}

/// 1-based position of `gold` in `list`.
fn rank_of(list: &[String], gold: &str) -> Option<usize> {
    for (i, l) in list.iter().enumerate() {
        if l == gold {
            return Some(i + 1);
        }
    }
    None
}

pub fn accuracy_at(lists: &[Vec<String>], gold: &[String], k: usize) -> f64 {
    let mut hits = 0.0;
    for (list, g) in lists.iter().zip(gold) {
        if let Some(r) = rank_of(list, g) {
            if r <= k {
                hits += 1.0;
            }
        }
    }
    hits / gold.len() as f64
}

pub fn mrr(lists: &[Vec<String>], gold: &[String]) -> f64 {
    let mut total = 0.0;
    for (list, g) in lists.iter().zip(gold) {
        if let Some(r) = rank_of(list, g) {
            total += 1.0 / r as f64;
        }
    }
    total / gold.len() as f64
}

pub fn exact(predictions: &[Option<String>], gold: &[String]) -> f64 {
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_deref() == Some(g.as_str()))
        .count();
    hits as f64 / gold.len() as f64
}
