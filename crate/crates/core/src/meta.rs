//! Shortest-path layers and parents from the seed, as meta-triples.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::{EntityId, Term, Triple, BFS_LAYER, BFS_PARENT};

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error("seed {0} does not occur in the graph")]
    SeedMissing(EntityId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaOverlay {
    pub seed: Option<EntityId>,
    pub layers: BTreeMap<EntityId, u32>,
    /// All predecessors one layer closer to the seed.
    pub parents: BTreeMap<EntityId, BTreeSet<EntityId>>,
    /// Entities in the graph that the seed cannot reach.
    pub unreachable: BTreeSet<EntityId>,
}

impl MetaOverlay {
    pub fn layer(&self, e: &EntityId) -> Option<u32> {
        self.layers.get(e).copied()
    }

    pub fn parents_of(&self, e: &EntityId) -> impl Iterator<Item = &EntityId> {
        self.parents.get(e).into_iter().flatten()
    }
}

/// Entity-to-entity edges taken from triples, as an alternative to the
/// crawl's discovery edges. Meta-relations are ignored.
pub fn edges_from_triples<'a, I: IntoIterator<Item = &'a Triple>>(triples: I) -> BTreeSet<(EntityId, EntityId)> {
    triples
        .into_iter()
        .filter(|t| !t.is_meta())
        .filter_map(|t| t.object.as_entity().map(|o| (t.subject.clone(), o.clone())))
        .collect()
}

/// Single-source BFS over directed edges.
pub fn compute_bfs_meta<'a, I>(edges: I, seed: &EntityId) -> Result<MetaOverlay, MetaError>
where
    I: IntoIterator<Item = &'a (EntityId, EntityId)>,
{
    let mut adj: HashMap<&EntityId, Vec<&EntityId>> = HashMap::new();
    let mut nodes: BTreeSet<&EntityId> = BTreeSet::new();
    let mut preds: HashMap<&EntityId, Vec<&EntityId>> = HashMap::new();
    for (u, v) in edges {
        adj.entry(u).or_default().push(v);
        preds.entry(v).or_default().push(u);
        nodes.insert(u);
        nodes.insert(v);
    }
    if !nodes.is_empty() && !nodes.contains(seed) {
        return Err(MetaError::SeedMissing(seed.clone()));
    }

    let mut dist: HashMap<&EntityId, u32> = HashMap::from([(seed, 0)]);
    let mut queue = VecDeque::from([seed]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        for &v in adj.get(u).into_iter().flatten() {
            if !dist.contains_key(v) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }

    let mut overlay = MetaOverlay {
        seed: Some(seed.clone()),
        ..MetaOverlay::default()
    };
    for (&e, &d) in &dist {
        overlay.layers.insert(e.clone(), d);
        if d == 0 {
            continue;
        }
        let ps: BTreeSet<EntityId> = preds
            .get(e)
            .into_iter()
            .flatten()
            .filter(|p| dist.get(*p) == Some(&(d - 1)))
            .map(|p| (*p).clone())
            .collect();
        overlay.parents.insert(e.clone(), ps);
    }
    overlay.unreachable = nodes.into_iter().filter(|n| !dist.contains_key(n)).cloned().collect();
    Ok(overlay)
}

/// One `bfsLayer` triple per annotated entity and one `bfsParent` triple
/// per (entity, parent) pair, sorted.
pub fn materialize_meta(overlay: &MetaOverlay) -> Vec<Triple> {
    let mut out = Vec::new();
    for (e, layer) in &overlay.layers {
        out.push(Triple {
            subject: e.clone(),
            predicate: BFS_LAYER.to_string(),
            object: Term::Literal(layer.to_string()),
        });
        for p in overlay.parents_of(e) {
            out.push(Triple {
                subject: e.clone(),
                predicate: BFS_PARENT.to_string(),
                object: Term::Entity(p.clone()),
            });
        }
    }
    out.sort();
    out
}

/// Rebuilds an overlay from stored meta-triples. The seed is the entity at
/// layer 0, if any; unparseable layers are skipped.
pub fn overlay_from_triples<'a, I: IntoIterator<Item = &'a Triple>>(triples: I) -> MetaOverlay {
    let mut overlay = MetaOverlay::default();
    for t in triples {
        match (t.predicate.as_str(), &t.object) {
            (BFS_LAYER, Term::Literal(l)) => {
                if let Ok(n) = l.parse::<u32>() {
                    overlay.layers.insert(t.subject.clone(), n);
                }
            }
            (BFS_PARENT, Term::Entity(p)) => {
                overlay.parents.entry(t.subject.clone()).or_default().insert(p.clone());
            }
            _ => {}
        }
    }
    overlay.seed = overlay.layers.iter().find(|(_, l)| **l == 0).map(|(e, _)| e.clone());
    overlay
}
