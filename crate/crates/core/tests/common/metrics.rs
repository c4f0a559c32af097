//! Random evaluation fixtures shared by the metric suites.

use predmap_core::evaluation::{candidate_lists, CandidateLists, GoldPair};
use predmap_core::rerank::{MappingOutcome, MappingResult};
use predmap_core::retrieval::{CandidateDump, DumpedCandidate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::time::Duration;

pub const LABELS: &[&str] = &[
    "agonist", "antagonist", "cofactor", "downregulator", "modulator", "part of", "regulator", "substrate",
    "upregulator", "inhibitor", "activator", "binder",
];

pub fn gold(id: &str, p: &str) -> GoldPair {
    GoldPair {
        relation_id: id.into(),
        gold_predicate: p.into(),
        gold_negated: None,
    }
}

pub fn result(id: &str, mapped: Option<&str>) -> MappingResult {
    MappingResult {
        relation_id: id.into(),
        mapped_predicate: mapped.map(Into::into),
        negated: false,
        outcome: if mapped.is_some() { MappingOutcome::Mapped } else { MappingOutcome::RejectedNone },
        candidate_count: 5,
        raw_response: String::new(),
        latency: Duration::ZERO,
        llm_calls: 1,
        error: None,
    }
}

/// Random relations with random candidate lists (possibly missing the
/// gold label) and random final picks.
pub struct Fixture {
    pub gold: Vec<GoldPair>,
    pub lists: Vec<Vec<String>>,
    pub picks: Vec<Option<String>>,
}

pub fn random_fixture(rng: &mut ChaCha8Rng, n: usize) -> Fixture {
    let mut fx = Fixture { gold: vec![], lists: vec![], picks: vec![] };
    for i in 0..n {
        let mut labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
        labels.shuffle(rng);
        let len = rng.random_range(0..=LABELS.len());
        labels.truncate(len);
        let g = LABELS[rng.random_range(0..LABELS.len())];
        let pick = match rng.random_range(0..4) {
            0 => None,
            1 => Some(g.to_string()),
            _ => labels.first().cloned(),
        };
        fx.gold.push(gold(&format!("r{i}"), g));
        fx.lists.push(labels);
        fx.picks.push(pick);
    }
    fx
}

pub fn dumps(fx: &Fixture) -> Vec<CandidateDump<f64>> {
    fx.lists
        .iter()
        .zip(&fx.gold)
        .map(|(list, g)| CandidateDump {
            id: g.relation_id.clone(),
            candidates: list
                .iter()
                .enumerate()
                .map(|(i, l)| DumpedCandidate {
                    label: l.clone(),
                    score: 1.0 - i as f64 / 100.0,
                    rank: i + 1,
                    negation_evidence: false,
                })
                .collect(),
        })
        .collect()
}

pub fn results(fx: &Fixture) -> Vec<MappingResult> {
    fx.gold
        .iter()
        .zip(&fx.picks)
        .map(|(g, p)| result(&g.relation_id, p.as_deref()))
        .collect()
}

pub fn lists_of(fx: &Fixture) -> CandidateLists {
    candidate_lists(&dumps(fx)).unwrap()
}
