mod common;

use std::fs;

use predmap_core::ontology::Polarity;
use predmap_core::providers::DeterministicEmbedder;
use predmap_core::store::{EmbeddingStore, StoreRole, MANIFEST_FILE, RECORDS_FILE};
use predmap_core::{Embedding, Store, StoreError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{chemprot_catalog, epoch, hash_embedder, small_catalog};

fn bits(store: &Store) -> Vec<(String, String, Polarity, Vec<u64>)> {
    store
        .records()
        .iter()
        .map(|r| {
            (
                r.predicate_label.clone(),
                r.descriptor_text.clone(),
                r.polarity,
                r.vector.values().iter().map(|v| v.to_bits()).collect(),
            )
        })
        .collect()
}

fn saved_small() -> (tempfile::TempDir, Store) {
    let (mut store, _) = Store::build(&small_catalog(), &hash_embedder(7, 64), StoreRole::Base, epoch()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    store.save(dir.path()).unwrap();
    (dir, store)
}

#[test]
fn table2_fixture_round_trips_bitwise() {
    let (mut store, degenerate) =
        Store::build(&chemprot_catalog(), &hash_embedder(11, 128), StoreRole::Base, epoch()).unwrap();
    assert!(degenerate.is_empty());
    assert_eq!(store.manifest().record_count, 30);
    let dir = tempfile::tempdir().unwrap();
    store.save(dir.path()).unwrap();
    let loaded = Store::load(dir.path()).unwrap();
    assert_eq!(loaded.manifest(), store.manifest());
    assert_eq!(bits(&loaded), bits(&store));
    assert!(loaded.records().iter().all(|r| r.polarity == Polarity::Positive));
}

#[test]
fn records_equal_independent_re_embedding() {
    let store = Store::build(&small_catalog(), &hash_embedder(3, 64), StoreRole::Base, epoch())
        .unwrap()
        .0;
    let embedder = DeterministicEmbedder::new(3, 64).unwrap();
    assert_eq!(store.len(), 7);
    for r in store.records() {
        let raw = embedder.embed_one(&r.descriptor_text);
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expected = Embedding::new(raw, store.model_id()).unwrap().normalized().unwrap();
        assert!(norm > 0.0);
        assert_eq!(
            r.vector.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            expected.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "{}",
            r.descriptor_text
        );
    }
}

#[test]
fn manifest_count_off_by_one_is_corrupt() {
    let (dir, store) = saved_small();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let needle = format!("\"record_count\": {}", store.len());
    assert!(text.contains(&needle));
    fs::write(&path, text.replace(&needle, &format!("\"record_count\": {}", store.len() + 1))).unwrap();
    assert!(matches!(Store::load(dir.path()), Err(StoreError::Corrupt(_))));
}

#[test]
fn truncated_records_are_corrupt() {
    let (dir, _) = saved_small();
    let path = dir.path().join(RECORDS_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap();
    fs::write(&path, &text[..cut + 1]).unwrap();
    assert!(matches!(Store::load(dir.path()), Err(StoreError::Corrupt(_))));
}

#[test]
fn dim_mismatch_against_manifest_is_corrupt() {
    let (dir, store) = saved_small();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace(&format!("\"dim\": {}", store.dim()), "\"dim\": 32")).unwrap();
    assert!(matches!(Store::load(dir.path()), Err(StoreError::Corrupt(_))));
}

#[test]
fn resave_of_identical_content_is_byte_identical() {
    let (dir, _) = saved_small();
    let before = fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
    let (mut again, _) = Store::build(
        &small_catalog(),
        &hash_embedder(7, 64),
        StoreRole::Base,
        epoch() + chrono::Duration::days(3),
    )
    .unwrap();
    again.save(dir.path()).unwrap();
    assert_eq!(fs::read(dir.path().join(MANIFEST_FILE)).unwrap(), before);
}

#[test]
fn f32_store_round_trips() {
    let (mut store, _) =
        EmbeddingStore::<f32>::build(&small_catalog(), &hash_embedder(7, 64), StoreRole::Auxiliary, epoch()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    store.save(dir.path()).unwrap();
    let loaded = EmbeddingStore::<f32>::load(dir.path()).unwrap();
    assert_eq!(loaded, store);
    assert_eq!(loaded.manifest().scalar, "f32");
    assert!(matches!(Store::load(dir.path()), Err(StoreError::Corrupt(_))));
}

#[test]
fn self_query_ranks_first() {
    let store = Store::build(&chemprot_catalog(), &hash_embedder(5, 256), StoreRole::Base, epoch())
        .unwrap()
        .0;
    for r in store.records() {
        let hits = store.knn(&r.vector, 1).unwrap();
        assert!((hits[0].score - 1.0).abs() <= 1e-9);
    }
    let all = store.knn(&store.records()[0].vector, 1000).unwrap();
    assert_eq!(all.len(), store.len());
}

#[test]
fn wrong_dim_query_is_rejected() {
    let (_, store) = saved_small();
    let q = Embedding::new(vec![1.0; 8], store.model_id()).unwrap();
    assert!(matches!(store.knn(&q, 3), Err(StoreError::QueryContractViolation(_))));
}

#[test]
fn twenty_record_fixture_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let labels: Vec<String> = ["treats", "affects", "causes", "binds"].iter().map(|s| s.to_string()).collect();
    let store = common::random_store(&mut rng, "m", StoreRole::Base, &labels, 20, 16);
    for _ in 0..50 {
        let q = Embedding::new(common::coarse_vector(&mut rng, 16), "m").unwrap();
        let got: Vec<_> = store
            .knn(&q, 5)
            .unwrap()
            .iter()
            .map(|h| (h.record.predicate_label.clone(), h.record.descriptor_text.clone(), h.score.to_bits()))
            .collect();
        let want: Vec<_> = common::oracle::top_k(&store, q.values(), 5)
            .iter()
            .map(|(r, s)| (r.predicate_label.clone(), r.descriptor_text.clone(), s.to_bits()))
            .collect();
        assert_eq!(got, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn knn_equals_brute_force(seed in any::<u64>(), n in 1usize..120, k in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let store = common::random_store(&mut rng, "m", StoreRole::Base, &labels, n, 8);
        let q = Embedding::new(common::coarse_vector(&mut rng, 8), "m").unwrap();
        let got: Vec<_> = store.knn(&q, k).unwrap().iter().map(|h| (h.record as *const _, h.score.to_bits())).collect();
        let want: Vec<_> = common::oracle::top_k(&store, q.values(), k).iter().map(|(r, s)| (*r as *const _, s.to_bits())).collect();
        prop_assert_eq!(got.len(), k.min(n));
        prop_assert_eq!(got, want);
    }

    #[test]
    fn stored_dot_matches_cosine(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = vec!["a".to_string(), "b".to_string()];
        let store = common::random_store(&mut rng, "m", StoreRole::Base, &labels, 10, 12);
        for a in store.records() {
            for b in store.records() {
                let dot: f64 = a.vector.values().iter().zip(b.vector.values()).map(|(x, y)| x * y).sum();
                prop_assert!((dot - predmap_core::cosine(a.vector.values(), b.vector.values())).abs() <= 1e-9);
            }
        }
    }
}
