//! A seeded synthetic world standing in for a language model at desk scale.
//!
//! The world is a random labelled digraph over entities `E0..E{n-1}` plus
//! literal objects. Its oracle answers elicitation with the ground-truth
//! out-edges (optionally with a fraction of objects replaced by fabricated
//! values) and recognizes named entities by membership in the entity set.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    fnv_mix, ElicitationResult, Elicitor, EntityRecognizer, OracleError, TokenUsage, UnitCosts,
};
use crate::model::{EntityId, Term, Triple};

pub const PREDICATES: &[&str] = &[
    "instanceOf",
    "locatedIn",
    "memberOf",
    "relatedTo",
    "spouse",
    "nationality",
    "gender",
    "knownFor",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldParams {
    pub seed: u64,
    pub entities: usize,
    pub max_out_degree: u64,
    /// Probability that a generated edge points at a literal.
    pub literal_fraction: f64,
}

impl WorldParams {
    pub fn new(seed: u64, entities: usize) -> Self {
        WorldParams {
            seed,
            entities,
            max_out_degree: 4,
            literal_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub entities: Vec<EntityId>,
    entity_set: HashSet<String>,
    out: HashMap<EntityId, Vec<(String, Term)>>,
}

impl SyntheticWorld {
    /// Generates a world; a pure function of `params`.
    pub fn generate(params: WorldParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let n = params.entities as u64;
        let entities: Vec<EntityId> = (0..n)
            .map(|i| EntityId::new(&format!("E{i}")).expect("non-empty label"))
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            let degree = rng.random_range(0..=params.max_out_degree);
            for _ in 0..degree {
                let p = PREDICATES[rng.random_range(0..PREDICATES.len() as u64) as usize];
                let object = if n < 2 || rng.random::<f64>() < params.literal_fraction {
                    Term::literal(format!("value {}", rng.random_range(0..10_000u64)))
                } else {
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    Term::Entity(entities[j as usize].clone())
                };
                edges.push(Triple {
                    subject: entities[i as usize].clone(),
                    predicate: p.to_string(),
                    object,
                });
            }
        }
        let mut world = Self::from_triples(entities, edges);
        world.seed = params.seed;
        world
    }

    /// Builds a world from explicit edges. Entity objects not listed in
    /// `entities` are added to the entity set.
    pub fn from_triples(entities: Vec<EntityId>, edges: Vec<Triple>) -> Self {
        let mut entities = entities;
        let mut entity_set: HashSet<String> = entities.iter().map(|e| e.label().to_string()).collect();
        for t in &edges {
            for e in std::iter::once(&t.subject).chain(t.object.as_entity()) {
                if entity_set.insert(e.label().to_string()) {
                    entities.push(e.clone());
                }
            }
        }
        let mut out: HashMap<EntityId, Vec<(String, Term)>> = HashMap::new();
        let mut seen = HashSet::new();
        for t in edges {
            if seen.insert(t.clone()) {
                out.entry(t.subject).or_default().push((t.predicate, t.object));
            }
        }
        SyntheticWorld {
            seed: 0,
            entities,
            entity_set,
            out,
        }
    }

    /// Root with `n` leaf children, all via `relatedTo`.
    pub fn star(root: &str, n: usize) -> Self {
        let root_id = EntityId::new(root).expect("non-empty root");
        let edges = (0..n)
            .map(|i| Triple::entity(root, "relatedTo", &format!("{root}-child-{i}")).expect("valid labels"))
            .collect();
        Self::from_triples(vec![root_id], edges)
    }

    pub fn is_entity(&self, label: &str) -> bool {
        self.entity_set.contains(label)
    }

    /// Ground-truth out-edges in generation order.
    pub fn out_edges(&self, e: &EntityId) -> &[(String, Term)] {
        self.out.get(e).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All ground-truth triples.
    pub fn triples(&self) -> BTreeSet<Triple> {
        self.out
            .iter()
            .flat_map(|(s, v)| {
                v.iter().map(move |(p, o)| Triple {
                    subject: s.clone(),
                    predicate: p.clone(),
                    object: o.clone(),
                })
            })
            .collect()
    }
}

/// Deterministic oracle answering from a [`SyntheticWorld`].
#[derive(Debug)]
pub struct SyntheticOracle {
    world: Arc<SyntheticWorld>,
    model: String,
    hallucination_rate: f64,
    hallucination_seed: u64,
    costs: UnitCosts,
    latency: Option<Duration>,
    failures: Mutex<HashMap<EntityId, u32>>,
}

impl SyntheticOracle {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        SyntheticOracle {
            world,
            model: "synthetic".into(),
            hallucination_rate: 0.0,
            hallucination_seed: 0,
            costs: UnitCosts::per_million(2.0, 8.0),
            latency: None,
            failures: Mutex::new(HashMap::new()),
        }
    }

    pub fn named(mut self, model: &str) -> Self {
        self.model = model.to_string();
        self
    }

    /// Replaces each object with a fabricated literal with probability
    /// `rate`, decided by a hash of `(seed, subject, position)`.
    pub fn with_hallucination(mut self, rate: f64, seed: u64) -> Self {
        self.hallucination_rate = rate.clamp(0.0, 1.0);
        self.hallucination_seed = seed;
        self
    }

    pub fn with_costs(mut self, costs: UnitCosts) -> Self {
        self.costs = costs;
        self
    }

    /// Sleeps this long per elicitation, to exercise worker interleaving.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Makes the next `times` elicitations of `entity` fail as unreachable.
    pub fn fail_entity(self, entity: &str, times: u32) -> Self {
        self.failures
            .lock()
            .unwrap()
            .insert(EntityId::new(entity).expect("non-empty label"), times);
        self
    }

    pub fn world(&self) -> &SyntheticWorld {
        &self.world
    }

    /// Token usage this oracle reports for a call returning `pairs` pairs.
    pub fn usage_for(entity: &EntityId, pairs: usize) -> TokenUsage {
        TokenUsage {
            prompt: 60 + 2 * entity.label().chars().count() as u64,
            completion: 8 + 12 * pairs as u64,
        }
    }

    pub fn unit_costs(&self) -> UnitCosts {
        self.costs
    }

    fn hallucinates(&self, entity: &EntityId, idx: usize) -> Option<u64> {
        if self.hallucination_rate <= 0.0 {
            return None;
        }
        let h = fnv_mix(self.hallucination_seed, entity.label(), idx as u64);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        (u < self.hallucination_rate).then_some(h)
    }
}

impl Elicitor for SyntheticOracle {
    fn elicit(&self, entity: &EntityId) -> Result<ElicitationResult, OracleError> {
        {
            let mut failures = self.failures.lock().unwrap();
            if let Some(n) = failures.get_mut(entity) {
                if *n > 0 {
                    *n -= 1;
                    return Err(OracleError::Unreachable(format!("injected failure for {entity}")));
                }
            }
        }
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        let pairs: Vec<(String, String)> = self
            .world
            .out_edges(entity)
            .iter()
            .enumerate()
            .map(|(i, (p, o))| match self.hallucinates(entity, i) {
                Some(h) => (p.clone(), format!("fabricated {:08x}", h as u32)),
                None => (p.clone(), o.text().to_string()),
            })
            .collect();
        let usage = Self::usage_for(entity, pairs.len());
        let raw_response = serde_json::json!({
            "triples": pairs.iter().map(|(p, o)| serde_json::json!({"predicate": p, "object": o})).collect::<Vec<_>>()
        })
        .to_string();
        Ok(ElicitationResult {
            subject: entity.clone(),
            pairs,
            raw_response,
            usage,
            cost: self.costs.cost(usage),
        })
    }

    fn model_name(&self) -> String {
        self.model.clone()
    }
}

impl EntityRecognizer for SyntheticOracle {
    fn named_entities(&self, candidates: &[String]) -> Result<Vec<String>, OracleError> {
        Ok(candidates
            .iter()
            .filter(|c| self.world.is_entity(c))
            .cloned()
            .collect())
    }
}
