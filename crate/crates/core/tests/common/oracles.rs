//! Reference implementations written without reusing library internals.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use kbforge::consolidate::LabelStats;
use kbforge::oracle::synthetic::SyntheticWorld;
use kbforge::{EntityId, Term, Triple};

/// Ground-truth BFS over a synthetic world: layer of every reachable
/// entity and its full set of shortest-path parents.
pub struct Bfs {
    pub layers: BTreeMap<EntityId, u32>,
    pub parents: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

pub fn world_bfs(world: &SyntheticWorld, seed: &EntityId) -> Bfs {
    let mut layers = BTreeMap::from([(seed.clone(), 0u32)]);
    let mut parents: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    let mut queue = VecDeque::from([seed.clone()]);
    while let Some(u) = queue.pop_front() {
        let d = layers[&u];
        for (_, o) in world.out_edges(&u) {
            let Term::Entity(v) = o else { continue };
            match layers.get(v) {
                None => {
                    layers.insert(v.clone(), d + 1);
                    parents.entry(v.clone()).or_default().insert(u.clone());
                    queue.push_back(v.clone());
                }
                Some(&dv) if dv == d + 1 => {
                    parents.entry(v.clone()).or_default().insert(u.clone());
                }
                Some(_) => {}
            }
        }
    }
    Bfs { layers, parents }
}

/// Out-edges of `entities` in the world, as triples.
pub fn world_triples_of(world: &SyntheticWorld, entities: &BTreeSet<EntityId>) -> BTreeSet<Triple> {
    entities
        .iter()
        .flat_map(|e| {
            world.out_edges(e).iter().map(move |(p, o)| Triple {
                subject: e.clone(),
                predicate: p.clone(),
                object: o.clone(),
            })
        })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .fold(0x811c_9dc5u32, |h, &b| (h ^ b as u32).wrapping_mul(0x0100_0193))
}

/// Hashed character-trigram embedding: lowercase, `#`-padded, 256 buckets,
/// unit length.
pub fn trigram_vector(label: &str) -> Vec<f64> {
    let padded = format!("#{}#", label.to_lowercase());
    let chars: Vec<char> = padded.chars().collect();
    let mut v = vec![0.0f64; 256];
    for w in chars.windows(3) {
        let s: String = w.iter().collect();
        v[(fnv1a(s.as_bytes()) % 256) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Brute-force canonicalization. Each label is compared against every
/// strictly more frequent label; the most similar one wins (ties go to the
/// lower frequency, then the smaller label) if it clears the threshold.
/// Chains are then followed to their end.
pub fn brute_canonicalize(stats: &[LabelStats], threshold: f64) -> BTreeMap<String, String> {
    let vectors: HashMap<&str, Vec<f64>> = stats.iter().map(|s| (s.label.as_str(), trigram_vector(&s.label))).collect();
    let mut direct: BTreeMap<&str, &str> = BTreeMap::new();
    for a in stats {
        let mut best: Option<(&LabelStats, f64)> = None;
        for b in stats.iter().filter(|b| b.frequency > a.frequency) {
            let sim = cosine(&vectors[a.label.as_str()], &vectors[b.label.as_str()]);
            let better = match best {
                None => true,
                Some((cur, s)) => {
                    sim > s || (sim == s && (b.frequency, &b.label) < (cur.frequency, &cur.label))
                }
            };
            if better {
                best = Some((b, sim));
            }
        }
        if let Some((b, sim)) = best {
            if sim >= threshold {
                direct.insert(&a.label, &b.label);
            }
        }
    }
    stats
        .iter()
        .map(|s| {
            let mut t = s.label.as_str();
            while let Some(n) = direct.get(t) {
                t = n;
            }
            (s.label.clone(), t.to_string())
        })
        .collect()
}
