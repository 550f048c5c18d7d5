//! Small bundled datasets for examples, tests and the demo server.
//!
//! The browsing world is a hand-written graph around one conference: a
//! city, its province, a language family whose dialects reach back to the
//! city, and a few people with spouse links.

use std::sync::Arc;

use crate::compare::{run_compare, CompareRun, CompareSettings, ComparedModel, Verifier};
use crate::crawl::{CrawlConfig, Crawler};
use crate::io::jsonl;
use crate::meta::{compute_bfs_meta, materialize_meta};
use crate::model::{EntityId, Triple};
use crate::oracle::synthetic::{SyntheticOracle, SyntheticWorld};
use crate::oracle::PromptTemplate;
use crate::store::TripleStore;
use crate::verify::{corpus_from_triples, RuleJudge, DEFAULT_TOP_K};

pub const BROWSE_SEED: &str = "EMNLP 2025";

const BROWSE_WORLD: &str = include_str!("../fixtures/browse_world.jsonl");

/// Entities compared in [`browse_compare_run`].
pub const BROWSE_COMPARE_ENTITIES: [&str; 4] = ["Suzhou", "Suzhounese", "Li Wei", "Maria Rossi"];

pub fn browse_world() -> SyntheticWorld {
    let edges = jsonl::parse_triples(BROWSE_WORLD).expect("bundled world parses");
    SyntheticWorld::from_triples(Vec::new(), edges)
}

fn seed() -> EntityId {
    EntityId::new(BROWSE_SEED).expect("non-empty seed")
}

/// Crawls the browsing world from its seed and adds the BFS meta-triples.
/// Sorted and deterministic.
pub fn browse_triples() -> Vec<Triple> {
    let oracle = SyntheticOracle::new(Arc::new(browse_world())).named("fixture");
    let state = Crawler::new(CrawlConfig::new(seed()), &oracle, &oracle)
        .run()
        .expect("fixture crawl succeeds");
    let overlay = compute_bfs_meta(&state.discovery_edges, &seed()).expect("seed is in the graph");
    let mut out: Vec<Triple> = state.triples.into_iter().collect();
    out.extend(materialize_meta(&overlay));
    out.sort();
    out.dedup();
    out
}

pub fn browse_store() -> TripleStore {
    TripleStore::from_triples(browse_triples()).expect("fixture triples are valid")
}

/// Two synthetic models over the browsing world: `exact` answers from the
/// ground truth, `noisy` fabricates about a third of its objects. Verified
/// against a corpus written from the ground truth.
pub fn browse_compare_run() -> CompareRun {
    let world = Arc::new(browse_world());
    let exact = SyntheticOracle::new(world.clone()).named("exact");
    let noisy = SyntheticOracle::new(world.clone()).named("noisy").with_hallucination(0.35, 11);
    let hash = PromptTemplate::default().hash();
    let models = [
        ComparedModel {
            name: "exact".into(),
            prompt_hash: hash.clone(),
            oracle: &exact,
        },
        ComparedModel {
            name: "noisy".into(),
            prompt_hash: hash,
            oracle: &noisy,
        },
    ];
    let truth = world.triples();
    let corpus = corpus_from_triples(&truth);
    let verifier = Verifier {
        backend: &corpus,
        judge: &RuleJudge,
        k: DEFAULT_TOP_K,
    };
    let settings = CompareSettings {
        ner: Some(&exact),
        ..CompareSettings::default()
    };
    let entities: Vec<EntityId> = BROWSE_COMPARE_ENTITIES
        .iter()
        .map(|e| EntityId::new(e).expect("non-empty"))
        .collect();
    run_compare(&models, &entities, &verifier, &settings).expect("fixture compare succeeds")
}
