//! In-process triple store.
//!
//! Terms are interned into a dictionary of `u32` ids; the triple set is kept
//! in three sorted permutations (SPO, POS, OSP) so that every pattern shape is
//! a prefix range scan on one of them. A token index over entity labels backs
//! keyword search, and per-predicate / per-class counts feed join ordering.

use std::collections::{BTreeSet, HashMap};
use std::ops::RangeInclusive;
use std::sync::Arc;

use crate::model::{EntityId, Term, TermKind, Triple, INSTANCE_OF};

pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Entity,
    Property,
    Literal,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("malformed triple: {0}")]
    MalformedTriple(String),
    #[error("term dictionary exhausted")]
    DictionaryFull,
}

#[derive(Debug, Default)]
struct Dictionary {
    nodes: Vec<(NodeKind, Arc<str>)>,
    ids: [HashMap<Arc<str>, TermId>; 3],
}

impl Dictionary {
    fn slot(kind: NodeKind) -> usize {
        match kind {
            NodeKind::Entity => 0,
            NodeKind::Property => 1,
            NodeKind::Literal => 2,
        }
    }

    fn get(&self, kind: NodeKind, text: &str) -> Option<TermId> {
        self.ids[Self::slot(kind)].get(text).copied()
    }

    fn intern(&mut self, kind: NodeKind, text: &str) -> Result<(TermId, bool), StoreError> {
        if let Some(id) = self.get(kind, text) {
            return Ok((id, false));
        }
        let id = TermId::try_from(self.nodes.len()).map_err(|_| StoreError::DictionaryFull)?;
        let text: Arc<str> = Arc::from(text);
        self.nodes.push((kind, text.clone()));
        self.ids[Self::slot(kind)].insert(text, id);
        Ok((id, true))
    }
}

/// A triple pattern; `None` is a wildcard.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: Option<EntityId>,
    pub predicate: Option<String>,
    pub object: Option<Term>,
}

impl TriplePattern {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn with_subject(mut self, s: EntityId) -> Self {
        self.subject = Some(s);
        self
    }

    pub fn with_predicate(mut self, p: &str) -> Self {
        self.predicate = Some(p.to_string());
        self
    }

    pub fn with_object(mut self, o: Term) -> Self {
        self.object = Some(o);
        self
    }

    pub fn matches(&self, t: &Triple) -> bool {
        self.subject.as_ref().is_none_or(|s| *s == t.subject)
            && self.predicate.as_ref().is_none_or(|p| *p == t.predicate)
            && self.object.as_ref().is_none_or(|o| *o == t.object)
    }
}

/// Which permutation served a lookup; reported by query plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexOrder {
    Spo,
    Pos,
    Osp,
}

impl IndexOrder {
    /// Chooses the permutation whose prefix covers the bound positions.
    pub fn for_bound(s: bool, p: bool, o: bool) -> Self {
        match (s, p, o) {
            (true, _, false) | (true, true, true) => IndexOrder::Spo,
            (true, false, true) => IndexOrder::Osp,
            (false, true, _) => IndexOrder::Pos,
            (false, false, true) => IndexOrder::Osp,
            (false, false, false) => IndexOrder::Spo,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexOrder::Spo => "SPO",
            IndexOrder::Pos => "POS",
            IndexOrder::Osp => "OSP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub total: usize,
    pub results: Vec<EntityId>,
}

#[derive(Debug, Default)]
pub struct TripleStore {
    dict: Dictionary,
    spo: BTreeSet<[TermId; 3]>,
    pos: BTreeSet<[TermId; 3]>,
    osp: BTreeSet<[TermId; 3]>,
    tokens: HashMap<Box<str>, Vec<TermId>>,
    predicate_counts: HashMap<TermId, usize>,
    class_counts: HashMap<TermId, usize>,
    subjects: usize,
    objects: usize,
}

fn prefix_range(a: Option<TermId>, b: Option<TermId>) -> RangeInclusive<[TermId; 3]> {
    match (a, b) {
        (None, _) => [0, 0, 0]..=[TermId::MAX; 3],
        (Some(a), None) => [a, 0, 0]..=[a, TermId::MAX, TermId::MAX],
        (Some(a), Some(b)) => [a, b, 0]..=[a, b, TermId::MAX],
    }
}

fn search_tokens(label: &str) -> impl Iterator<Item = String> + '_ {
    label.split_whitespace().map(str::to_lowercase)
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    fn intern_entity(&mut self, e: &EntityId) -> Result<TermId, StoreError> {
        let (id, fresh) = self.dict.intern(NodeKind::Entity, e.label())?;
        if fresh {
            let mut seen: Vec<String> = search_tokens(e.label()).collect();
            seen.sort();
            seen.dedup();
            for tok in seen {
                self.tokens.entry(tok.into_boxed_str()).or_default().push(id);
            }
        }
        Ok(id)
    }

    fn intern_triple(&mut self, t: &Triple) -> Result<[TermId; 3], StoreError> {
        if t.predicate.trim().is_empty() {
            return Err(StoreError::MalformedTriple(t.to_string()));
        }
        let s = self.intern_entity(&t.subject)?;
        let (p, _) = self.dict.intern(NodeKind::Property, &t.predicate)?;
        let o = match &t.object {
            Term::Entity(e) => self.intern_entity(e)?,
            Term::Literal(l) => self.dict.intern(NodeKind::Literal, l)?.0,
        };
        Ok([s, p, o])
    }

    fn insert_ids(&mut self, [s, p, o]: [TermId; 3]) -> bool {
        if self.spo.contains(&[s, p, o]) {
            return false;
        }
        if self.spo.range(prefix_range(Some(s), None)).next().is_none() {
            self.subjects += 1;
        }
        if self.osp.range(prefix_range(Some(o), None)).next().is_none() {
            self.objects += 1;
        }
        self.spo.insert([s, p, o]);
        self.pos.insert([p, o, s]);
        self.osp.insert([o, s, p]);
        *self.predicate_counts.entry(p).or_default() += 1;
        if self.is_instance_of(p) {
            *self.class_counts.entry(o).or_default() += 1;
        }
        true
    }

    fn is_instance_of(&self, p: TermId) -> bool {
        &*self.dict.nodes[p as usize].1 == INSTANCE_OF
    }

    /// Set insertion; returns whether the triple was new.
    pub fn insert(&mut self, t: &Triple) -> Result<bool, StoreError> {
        let ids = self.intern_triple(t)?;
        Ok(self.insert_ids(ids))
    }

    /// Loads a stream of triples and returns the number of distinct new ones.
    pub fn bulk_load<I>(&mut self, triples: I) -> Result<usize, StoreError>
    where
        I: IntoIterator<Item = Triple>,
    {
        let mut ids = Vec::new();
        for t in triples {
            ids.push(self.intern_triple(&t)?);
        }
        if !self.spo.is_empty() {
            return Ok(ids.into_iter().filter(|&t| self.insert_ids(t)).count());
        }
        // Fresh store: build every permutation from sorted input in one go.
        ids.sort_unstable();
        ids.dedup();
        let n = ids.len();
        let mut last_s = None;
        for &[s, p, o] in &ids {
            if last_s != Some(s) {
                self.subjects += 1;
                last_s = Some(s);
            }
            *self.predicate_counts.entry(p).or_default() += 1;
            if self.is_instance_of(p) {
                *self.class_counts.entry(o).or_default() += 1;
            }
        }
        let mut pos: Vec<_> = ids.iter().map(|&[s, p, o]| [p, o, s]).collect();
        let mut osp: Vec<_> = ids.iter().map(|&[s, p, o]| [o, s, p]).collect();
        pos.sort_unstable();
        osp.sort_unstable();
        let mut distinct_objects = 0;
        let mut last_o = None;
        for &[o, _, _] in &osp {
            if last_o != Some(o) {
                distinct_objects += 1;
                last_o = Some(o);
            }
        }
        self.objects = distinct_objects;
        self.spo = ids.into_iter().collect();
        self.pos = pos.into_iter().collect();
        self.osp = osp.into_iter().collect();
        Ok(n)
    }

    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Result<Self, StoreError> {
        let mut store = Self::new();
        store.bulk_load(triples)?;
        Ok(store)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.encode_triple(t).is_some_and(|ids| self.spo.contains(&ids))
    }

    fn encode_triple(&self, t: &Triple) -> Option<[TermId; 3]> {
        Some([
            self.entity_id(&t.subject)?,
            self.property_id(&t.predicate)?,
            self.term_id(&t.object)?,
        ])
    }

    pub fn entity_id(&self, e: &EntityId) -> Option<TermId> {
        self.dict.get(NodeKind::Entity, e.label())
    }

    pub fn property_id(&self, p: &str) -> Option<TermId> {
        self.dict.get(NodeKind::Property, p)
    }

    pub fn literal_id(&self, l: &str) -> Option<TermId> {
        self.dict.get(NodeKind::Literal, l)
    }

    pub fn term_id(&self, t: &Term) -> Option<TermId> {
        match t {
            Term::Entity(e) => self.entity_id(e),
            Term::Literal(l) => self.literal_id(l),
        }
    }

    pub fn node(&self, id: TermId) -> (NodeKind, &str) {
        let (k, s) = &self.dict.nodes[id as usize];
        (*k, s)
    }

    /// Decodes an object-position id. Property ids decode as literals.
    pub fn term(&self, id: TermId) -> Term {
        match self.node(id) {
            (NodeKind::Entity, s) => Term::Entity(EntityId::from_normalized(s)),
            (_, s) => Term::Literal(s.to_string()),
        }
    }

    fn decode(&self, [s, p, o]: [TermId; 3]) -> Triple {
        Triple {
            subject: EntityId::from_normalized(self.node(s).1),
            predicate: self.node(p).1.to_string(),
            object: self.term(o),
        }
    }

    /// Id-level pattern scan. Results come back as `[s, p, o]` in the order
    /// of the permutation that served them.
    pub fn scan(
        &self,
        s: Option<TermId>,
        p: Option<TermId>,
        o: Option<TermId>,
    ) -> Box<dyn Iterator<Item = [TermId; 3]> + '_> {
        match IndexOrder::for_bound(s.is_some(), p.is_some(), o.is_some()) {
            IndexOrder::Spo => Box::new(
                self.spo
                    .range(prefix_range(s, p))
                    .copied()
                    .filter(move |t| o.is_none_or(|o| t[2] == o)),
            ),
            IndexOrder::Pos => Box::new(
                self.pos
                    .range(prefix_range(p, o))
                    .map(|&[p, o, s]| [s, p, o]),
            ),
            IndexOrder::Osp => Box::new(
                self.osp
                    .range(prefix_range(o, s))
                    .map(|&[o, s, p]| [s, p, o]),
            ),
        }
    }

    /// Exactly the triples unifying with `pattern`, lazily, in index order.
    pub fn matches<'a>(&'a self, pattern: &TriplePattern) -> Box<dyn Iterator<Item = Triple> + 'a> {
        let s = match &pattern.subject {
            Some(e) => match self.entity_id(e) {
                Some(id) => Some(id),
                None => return Box::new(std::iter::empty()),
            },
            None => None,
        };
        let p = match &pattern.predicate {
            Some(p) => match self.property_id(p) {
                Some(id) => Some(id),
                None => return Box::new(std::iter::empty()),
            },
            None => None,
        };
        let o = match &pattern.object {
            Some(t) => match self.term_id(t) {
                Some(id) => Some(id),
                None => return Box::new(std::iter::empty()),
            },
            None => None,
        };
        Box::new(self.scan(s, p, o).map(move |ids| self.decode(ids)))
    }

    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().map(move |&ids| self.decode(ids))
    }

    pub fn triples_of(&self, subject: &EntityId) -> Vec<Triple> {
        self.matches(&TriplePattern::any().with_subject(subject.clone())).collect()
    }

    /// All entity labels known to the store (as subject or object).
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.dict
            .nodes
            .iter()
            .filter(|(k, _)| *k == NodeKind::Entity)
            .map(|(_, s)| &**s)
    }

    pub fn has_entity(&self, e: &EntityId) -> bool {
        self.entity_id(e).is_some()
    }

    pub fn distinct_subjects(&self) -> usize {
        self.subjects
    }

    pub fn distinct_objects(&self) -> usize {
        self.objects
    }

    pub fn predicate_count(&self, p: &str) -> usize {
        self.property_id(p).map_or(0, |id| self.predicate_count_id(id))
    }

    pub fn predicate_count_id(&self, p: TermId) -> usize {
        self.predicate_counts.get(&p).copied().unwrap_or(0)
    }

    pub fn class_count_id(&self, class: TermId) -> usize {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn predicates(&self) -> impl Iterator<Item = (&str, usize)> {
        self.predicate_counts.iter().map(|(&id, &n)| (self.node(id).1, n))
    }

    pub fn classes(&self) -> impl Iterator<Item = (Term, usize)> + '_ {
        self.class_counts.iter().map(|(&id, &n)| (self.term(id), n))
    }

    /// Case-insensitive substring search over entity labels.
    ///
    /// Ranked by exact match, then prefix match, then shorter label, then
    /// lexicographic order. `total` counts every match, not just the page.
    pub fn search_entities(&self, query: &str, limit: usize) -> SearchResult {
        let needle = query.trim().to_lowercase();
        if needle.is_empty() {
            return SearchResult { total: 0, results: Vec::new() };
        }
        // Any whitespace-free piece of a matching label lies inside one label
        // token, so the longest query piece narrows the candidate set.
        let probe = needle
            .split_whitespace()
            .max_by_key(|t| t.len())
            .unwrap_or(&needle)
            .to_string();
        let mut candidates: Vec<TermId> = self
            .tokens
            .iter()
            .filter(|(tok, _)| tok.contains(probe.as_str()))
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect();
        candidates.sort_unstable();
        candidates.dedup();

        let mut hits: Vec<(u8, usize, &str)> = candidates
            .into_iter()
            .filter_map(|id| {
                let label = self.node(id).1;
                let lower = label.to_lowercase();
                if !lower.contains(&needle) {
                    return None;
                }
                let rank = if lower == needle {
                    0
                } else if lower.starts_with(&needle) {
                    1
                } else {
                    2
                };
                Some((rank, label.chars().count(), label))
            })
            .collect();
        hits.sort_unstable();
        SearchResult {
            total: hits.len(),
            results: hits
                .into_iter()
                .take(limit)
                .map(|(_, _, l)| EntityId::from_normalized(l))
                .collect(),
        }
    }

    pub fn kind_of(&self, id: TermId) -> TermKind {
        match self.node(id).0 {
            NodeKind::Entity => TermKind::Entity,
            _ => TermKind::Literal,
        }
    }
}
