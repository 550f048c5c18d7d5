//! Knowledge-base statistics and the canned analysis queries.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::consolidate::ConsolidationReport;
use crate::meta::MetaOverlay;
use crate::model::{normalize_label, Term, INSTANCE_OF};
use crate::query::{evaluate, parse_query, EvalOptions, ResultTable};
use crate::store::TripleStore;

/// The five analysis queries, shipped as files under `queries/`.
pub const CANNED_QUERIES: [(&str, &str); 5] = [
    ("classes", include_str!("../queries/classes.rq")),
    ("nationalities", include_str!("../queries/nationalities.rq")),
    ("genders", include_str!("../queries/genders.rq")),
    ("eu_citizens", include_str!("../queries/eu_citizens.rq")),
    ("symmetry", include_str!("../queries/symmetry.rq")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbStatistics {
    /// Distinct subjects of non-meta triples.
    pub entities: usize,
    pub triples: usize,
    pub triples_with_meta: usize,
    pub relations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relations_raw: Option<usize>,
    pub classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes_raw: Option<usize>,
    pub entity_objects: usize,
    pub literal_objects: usize,
    pub avg_triples_per_entity: f64,
    /// Mean character count of entity labels.
    pub avg_label_length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_overlap: Option<f64>,
    /// Entities per BFS layer, when an overlay is supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<BTreeMap<u32, usize>>,
}

/// Statistics over the store. `canon` supplies the before-consolidation
/// relation and class counts; `reference` is a list of labels to measure
/// overlap against.
pub fn compute_stats(
    store: &TripleStore,
    meta: Option<&MetaOverlay>,
    canon: Option<&ConsolidationReport>,
    reference: Option<&[String]>,
) -> KbStatistics {
    let mut subjects: HashSet<&str> = HashSet::new();
    let mut predicates: HashSet<&str> = HashSet::new();
    let mut classes: HashSet<Term> = HashSet::new();
    let (mut triples, mut with_meta, mut entity_objects, mut literal_objects) = (0, 0, 0, 0);
    for t in store.iter() {
        with_meta += 1;
        if t.is_meta() {
            continue;
        }
        triples += 1;
        match t.object {
            Term::Entity(_) => entity_objects += 1,
            Term::Literal(_) => literal_objects += 1,
        }
        if t.predicate == INSTANCE_OF {
            classes.insert(t.object.clone());
        }
        // Borrow labels from the store's dictionary rather than the
        // decoded triple.
        if let Some(id) = store.entity_id(&t.subject) {
            subjects.insert(store.node(id).1);
        }
        if let Some(id) = store.property_id(&t.predicate) {
            predicates.insert(store.node(id).1);
        }
    }
    let entities = subjects.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let label_chars: usize = subjects.iter().map(|s| s.chars().count()).sum();
    let reference_overlap = reference.map(|refs| {
        let set: HashSet<String> = refs.iter().filter_map(|r| normalize_label(r).ok()).collect();
        ratio(subjects.iter().filter(|s| set.contains(**s)).count(), entities)
    });
    let layers = meta.map(|m| {
        let mut h = BTreeMap::new();
        for l in m.layers.values() {
            *h.entry(*l).or_default() += 1;
        }
        h
    });
    KbStatistics {
        entities,
        triples,
        triples_with_meta: with_meta,
        relations: predicates.len(),
        relations_raw: canon.map(|c| c.relations_before),
        classes: classes.len(),
        classes_raw: canon.map(|c| c.classes_before),
        entity_objects,
        literal_objects,
        avg_triples_per_entity: ratio(triples, entities),
        avg_label_length: ratio(label_chars, entities),
        reference_overlap,
        layers,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub name: String,
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<ResultTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysesReport {
    pub analyses: Vec<AnalysisResult>,
}

impl AnalysesReport {
    pub fn get(&self, name: &str) -> Option<&AnalysisResult> {
        self.analyses.iter().find(|a| a.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.analyses {
            out.push_str(&format!("## {} ({} ms)\n", a.name, a.elapsed_ms));
            match (&a.table, &a.error) {
                (Some(t), _) => out.push_str(&t.to_text()),
                (None, Some(e)) => out.push_str(&format!("error: {e}\n")),
                (None, None) => {}
            }
            out.push('\n');
        }
        out
    }
}

/// Runs each named query on its own thread. A failing query is reported
/// and does not stop the others.
pub fn run_analyses(store: &TripleStore, queries: &[(&str, &str)], opts: &EvalOptions) -> AnalysesReport {
    let analyses = std::thread::scope(|scope| {
        let handles: Vec<_> = queries
            .iter()
            .map(|&(name, text)| {
                scope.spawn(move || {
                    let start = Instant::now();
                    let result = parse_query(text).and_then(|plan| evaluate(&plan, store, opts));
                    let (table, error) = match result {
                        Ok(t) => (Some(t), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    AnalysisResult {
                        name: name.to_string(),
                        query: text.to_string(),
                        table,
                        error,
                        elapsed_ms: start.elapsed().as_millis() as u64,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    });
    AnalysesReport { analyses }
}

pub fn run_canned_analyses(store: &TripleStore, opts: &EvalOptions) -> AnalysesReport {
    run_analyses(store, &CANNED_QUERIES, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Triple, BFS_LAYER};
    use crate::query::ResultValue;

    fn fixture() -> TripleStore {
        // 4 subjects, 10 facts: 6 entity objects and 4 literal objects.
        let e = |s, p, o| Triple::entity(s, p, o).unwrap();
        let l = |s, p, o| Triple::literal(s, p, o).unwrap();
        TripleStore::from_triples([
            e("Ann", "instanceOf", "human"),
            e("Ann", "gender", "female"),
            e("Ann", "nationality", "German"),
            l("Ann", "birthYear", "1970"),
            e("Bob", "instanceOf", "human"),
            e("Bob", "gender", "male"),
            l("Bob", "birthYear", "1980"),
            e("Cy", "gender", "female"),
            l("Cy", "birthYear", "1990"),
            l("Dee", "motto", "carpe diem"),
            l("Ann", BFS_LAYER, "0"),
        ])
        .unwrap()
    }

    #[test]
    fn fixture_statistics() {
        let s = compute_stats(&fixture(), None, None, Some(&["ann".into(), "Bob".into(), "  Cy ".into()]));
        assert_eq!(s.entities, 4);
        assert_eq!(s.triples, 10);
        assert_eq!(s.triples_with_meta, 11);
        assert_eq!(s.avg_triples_per_entity, 2.5);
        assert_eq!((s.entity_objects, s.literal_objects), (6, 4));
        assert_eq!(s.entity_objects + s.literal_objects, s.triples);
        assert_eq!(s.classes, 1);
        assert_eq!(s.relations, 5);
        assert_eq!(s.avg_label_length, (3 + 3 + 2 + 3) as f64 / 4.0);
        assert_eq!(s.reference_overlap, Some(0.5));
        assert!(compute_stats(&fixture(), None, None, None).reference_overlap.is_none());
    }

    #[test]
    fn table_one_ratio_is_consistent_with_rounding() {
        // 100M triples over 6.1M entities, both rounded to the digits shown.
        let exact: f64 = 100e6 / 6.1e6;
        assert!((exact - 16.39).abs() < 0.005);
        let lo = 99.5e6 / 6.15e6;
        let hi = 100.5e6 / 6.05e6;
        assert!(lo <= 16.3 && 16.3 <= hi);
    }

    #[test]
    fn gender_counts_on_fixture() {
        let r = run_canned_analyses(&fixture(), &EvalOptions::default());
        let g = r.get("genders").unwrap().table.as_ref().unwrap();
        assert_eq!(
            g.rows,
            vec![
                vec![Some(ResultValue::Entity("female".into())), Some(ResultValue::Integer(2))],
                vec![Some(ResultValue::Entity("male".into())), Some(ResultValue::Integer(1))],
            ]
        );
        let eu = r.get("eu_citizens").unwrap().table.as_ref().unwrap();
        assert_eq!(eu.rows, vec![vec![Some(ResultValue::Integer(1))]]);
    }

    #[test]
    fn empty_store_gives_empty_or_zero_tables() {
        let r = run_canned_analyses(&TripleStore::new(), &EvalOptions::default());
        assert_eq!(r.analyses.len(), 5);
        for a in &r.analyses {
            let t = a.table.as_ref().unwrap_or_else(|| panic!("{} failed: {:?}", a.name, a.error));
            match a.name.as_str() {
                "eu_citizens" | "symmetry" => {
                    assert_eq!(t.rows.len(), 1);
                    assert_eq!(t.rows[0][0], Some(ResultValue::Integer(0)));
                }
                _ => assert!(t.is_empty()),
            }
        }
        assert!(r.to_text().contains("## symmetry"));
    }

    #[test]
    fn failing_query_does_not_stop_others() {
        let r = run_analyses(
            &fixture(),
            &[("bad", "SELECT ?x WHERE { FILTER }"), CANNED_QUERIES[2]],
            &EvalOptions::default(),
        );
        assert!(r.analyses[0].error.is_some());
        assert!(r.analyses[1].table.is_some());
    }
}
