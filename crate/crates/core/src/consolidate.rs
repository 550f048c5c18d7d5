//! Greedy canonicalization of relation and class labels.
//!
//! Labels are visited from least to most frequent; each one is merged into
//! the most similar strictly-more-frequent label if their embeddings are
//! close enough. Chains are closed so every entry points at a survivor.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{is_meta_predicate, Term, Triple, INSTANCE_OF};
use crate::oracle::{dot, Embedder, OracleError};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum ConsolidationError {
    #[error("label {0:?} is not in the mapping")]
    UnknownLabel(String),
    #[error("threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("no labels to canonicalize")]
    Empty,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub label: String,
    pub frequency: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    Relation,
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub from: String,
    pub to: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonMapping {
    pub kind: MappingKind,
    pub threshold: f64,
    pub entries: BTreeMap<String, String>,
    /// Direct merges, in processing order, before chain closure.
    pub merges: Vec<Merge>,
}

impl CanonMapping {
    pub fn identity<I: IntoIterator<Item = S>, S: Into<String>>(kind: MappingKind, labels: I) -> Self {
        CanonMapping {
            kind,
            threshold: 1.0,
            entries: labels
                .into_iter()
                .map(|l| {
                    let l = l.into();
                    (l.clone(), l)
                })
                .collect(),
            merges: Vec::new(),
        }
    }

    pub fn get(&self, label: &str) -> Result<&str, ConsolidationError> {
        self.entries
            .get(label)
            .map(String::as_str)
            .ok_or_else(|| ConsolidationError::UnknownLabel(label.to_string()))
    }

    pub fn canonical_labels(&self) -> BTreeSet<&str> {
        self.entries.values().map(String::as_str).collect()
    }
}

/// Builds a mapping by greedy merging into more frequent labels.
pub fn greedy_canonicalize(
    kind: MappingKind,
    stats: &[LabelStats],
    threshold: f64,
    embedder: &dyn Embedder,
) -> Result<CanonMapping, ConsolidationError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ConsolidationError::BadThreshold(threshold));
    }
    if stats.is_empty() {
        return Err(ConsolidationError::Empty);
    }
    let mut order: Vec<&LabelStats> = stats.iter().collect();
    order.sort_by(|a, b| a.frequency.cmp(&b.frequency).then_with(|| a.label.cmp(&b.label)));
    let vectors = order
        .iter()
        .map(|s| embedder.embed(&s.label))
        .collect::<Result<Vec<_>, _>>()?;

    let mut direct: HashMap<&str, &str> = HashMap::new();
    let mut merges = Vec::new();
    for (i, s) in order.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        // Everything after the first strictly larger frequency qualifies.
        let start = order[i..].iter().position(|t| t.frequency > s.frequency).map(|k| i + k);
        for j in start.into_iter().flat_map(|st| st..order.len()) {
            let sim = dot(&vectors[i], &vectors[j]);
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((j, sim));
            }
        }
        if let Some((j, sim)) = best.filter(|&(_, sim)| sim >= threshold) {
            direct.insert(&s.label, &order[j].label);
            merges.push(Merge {
                from: s.label.clone(),
                to: order[j].label.clone(),
                similarity: sim,
            });
        }
    }

    let entries = order
        .iter()
        .map(|s| {
            let mut target = s.label.as_str();
            while let Some(next) = direct.get(target) {
                target = next;
            }
            (s.label.clone(), target.to_string())
        })
        .collect();
    Ok(CanonMapping {
        kind,
        threshold,
        entries,
        merges,
    })
}

fn to_stats(counts: BTreeMap<String, usize>) -> Vec<LabelStats> {
    counts
        .into_iter()
        .map(|(label, frequency)| LabelStats { label, frequency })
        .collect()
}

/// Predicate frequencies, meta-relations excluded.
pub fn relation_stats(triples: &[Triple]) -> Vec<LabelStats> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in triples.iter().filter(|t| !t.is_meta()) {
        *counts.entry(t.predicate.clone()).or_default() += 1;
    }
    to_stats(counts)
}

/// Frequencies of objects of predicates that canonicalize to `instanceOf`.
pub fn class_stats(triples: &[Triple], relations: &CanonMapping) -> Result<Vec<LabelStats>, ConsolidationError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in triples.iter().filter(|t| !t.is_meta()) {
        if relations.get(&t.predicate)? == INSTANCE_OF {
            *counts.entry(t.object.text().to_string()).or_default() += 1;
        }
    }
    Ok(to_stats(counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub relations_before: usize,
    pub relations_after: usize,
    /// Classes under the relation mapping, before classes are merged.
    pub classes_before: usize,
    pub classes_after: usize,
    pub merges: Vec<Merge>,
    pub class_merges: Vec<Merge>,
    pub duplicates_removed: usize,
}

fn distinct_classes(triples: &[Triple]) -> usize {
    triples
        .iter()
        .filter(|t| t.predicate == INSTANCE_OF)
        .map(|t| t.object.text())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Rewrites predicates and `instanceOf` objects; removes duplicates. The
/// output is sorted.
pub fn apply_mapping(
    triples: &[Triple],
    relations: &CanonMapping,
    classes: &CanonMapping,
) -> Result<(Vec<Triple>, ConsolidationReport), ConsolidationError> {
    let mut out = BTreeSet::new();
    for t in triples {
        if is_meta_predicate(&t.predicate) {
            out.insert(t.clone());
            continue;
        }
        let predicate = relations.get(&t.predicate)?.to_string();
        let object = if predicate == INSTANCE_OF {
            let canon = classes.get(t.object.text())?;
            match &t.object {
                Term::Entity(_) => Term::entity(canon).map_err(|_| ConsolidationError::UnknownLabel(canon.into()))?,
                Term::Literal(_) => Term::literal(canon),
            }
        } else {
            t.object.clone()
        };
        out.insert(Triple {
            subject: t.subject.clone(),
            predicate,
            object,
        });
    }
    let rewritten: Vec<Triple> = out.into_iter().collect();
    let predicates = |ts: &[Triple]| {
        ts.iter()
            .filter(|t| !t.is_meta())
            .map(|t| t.predicate.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    let unique_in = triples.iter().collect::<BTreeSet<_>>().len();
    let report = ConsolidationReport {
        relations_before: predicates(triples),
        relations_after: predicates(&rewritten),
        classes_before: class_stats(triples, relations)?.len(),
        classes_after: distinct_classes(&rewritten),
        merges: relations.merges.clone(),
        class_merges: classes.merges.clone(),
        duplicates_removed: unique_in - rewritten.len(),
    };
    Ok((rewritten, report))
}

/// Builds the relation mapping and, from it, the class mapping.
pub fn build_mappings(
    triples: &[Triple],
    threshold: f64,
    embedder: &dyn Embedder,
) -> Result<(CanonMapping, CanonMapping), ConsolidationError> {
    let rel_stats = relation_stats(triples);
    let relations = if rel_stats.is_empty() {
        CanonMapping::identity(MappingKind::Relation, Vec::<String>::new())
    } else {
        greedy_canonicalize(MappingKind::Relation, &rel_stats, threshold, embedder)?
    };
    let cls_stats = class_stats(triples, &relations)?;
    let classes = if cls_stats.is_empty() {
        CanonMapping::identity(MappingKind::Class, Vec::<String>::new())
    } else {
        greedy_canonicalize(MappingKind::Class, &cls_stats, threshold, embedder)?
    };
    Ok((relations, classes))
}

/// Canonicalizes relations, then classes, then rewrites the triples.
pub fn consolidate(
    triples: &[Triple],
    threshold: f64,
    embedder: &dyn Embedder,
) -> Result<(Vec<Triple>, ConsolidationReport), ConsolidationError> {
    let (relations, classes) = build_mappings(triples, threshold, embedder)?;
    apply_mapping(triples, &relations, &classes)
}
