//! Seeded random fixtures.

use kbforge::{EntityId, Term, Triple, TripleStore};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const PREDICATES: [&str; 8] = [
    "spouse",
    "knows",
    "locatedIn",
    "instanceOf",
    "partOf",
    "memberOf",
    "cites",
    "population",
];

/// Plain-ASCII graph for query tests: `entities` nodes named `Entity N`,
/// a quarter of objects literal.
pub fn query_fixture(seed: u64, triples: usize, entities: usize) -> Vec<Triple> {
    let mut rng = rng(seed);
    let mut out: Vec<Triple> = (0..triples)
        .map(|_| {
            let s = EntityId::new(&format!("Entity {}", rng.random_range(0..entities))).unwrap();
            let p = PREDICATES[rng.random_range(0..PREDICATES.len())];
            let o = if rng.random_bool(0.25) {
                Term::literal(format!("value {}", rng.random_range(0..30)))
            } else {
                Term::entity(&format!("Entity {}", rng.random_range(0..entities))).unwrap()
            };
            Triple::new(s, p, o).unwrap()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

const POOLS: [&str; 8] = [
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789",
    "äöüßéèêçñåøÆŒłśźżğışţ",
    "蘇州話上海吳語北京東京서울대학교",
    "ΑβγδΩЖжщЯعربيةעבריתहिन्दीไทย",
    "😀🎉🌏🧬🦀👩‍🔬",
    " _%.-~'\"\\:/#?&=+,;<>@()[]{}!*$",
    "\u{301}\u{308}\u{200d}\u{a0}\u{2028}",
    "0123456789",
];

fn random_text(rng: &mut impl Rng, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    let mut s = String::new();
    for _ in 0..len {
        let pool: Vec<char> = POOLS[rng.random_range(0..POOLS.len())].chars().collect();
        s.push(pool[rng.random_range(0..pool.len())]);
    }
    s
}

fn random_label(rng: &mut impl Rng) -> EntityId {
    loop {
        if let Ok(e) = EntityId::new(&random_text(rng, 16)) {
            return e;
        }
    }
}

fn random_literal(rng: &mut impl Rng) -> String {
    match rng.random_range(0..10) {
        0 => String::new(),
        1 => format!("line one\nline \"two\"\t\\ end\r{}", '\u{1}'),
        2 => rng.random_range(-1000..100_000).to_string(),
        _ => random_text(rng, 24),
    }
}

/// A Unicode-heavy triple set with up to `max` triples.
pub fn unicode_triples(rng: &mut impl Rng, max: usize) -> Vec<Triple> {
    let n = rng.random_range(0..=max);
    let pool_size = (n / 3).max(1);
    let entities: Vec<EntityId> = (0..pool_size).map(|_| random_label(rng)).collect();
    let predicates: Vec<String> = (0..rng.random_range(1..12))
        .map(|i| if i % 3 == 2 { random_label(rng).label().to_string() } else { format!("rel{i}") })
        .collect();
    (0..n)
        .map(|_| {
            let s = entities[rng.random_range(0..entities.len())].clone();
            let p = &predicates[rng.random_range(0..predicates.len())];
            let o = if rng.random_bool(0.4) {
                Term::Literal(random_literal(rng))
            } else {
                Term::Entity(entities[rng.random_range(0..entities.len())].clone())
            };
            Triple::new(s, p, o).unwrap()
        })
        .collect()
}

/// Exactly `n` distinct triples over `n / 10` entities, for load tests.
pub fn large_store(n: usize) -> TripleStore {
    let entities = (n / 10).max(1);
    let triples = (0..n).map(|i| {
        let (k, j) = (i % entities, i / entities);
        let s = EntityId::new(&format!("E{k}")).unwrap();
        let o = Term::entity(&format!("E{}", (k + 1 + j * 9973) % entities)).unwrap();
        Triple::new(s, PREDICATES[j % PREDICATES.len()], o).unwrap()
    });
    let mut store = TripleStore::new();
    store.bulk_load(triples).unwrap();
    store
}
