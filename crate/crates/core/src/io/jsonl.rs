//! Internal JSON-lines formats.
//!
//! Triples are one `{"s", "p", "o_kind", "o"}` object per line; discovery
//! edges are `{"parent", "child"}`. Lines starting with `#` are comments, and
//! writers emit a version header comment first.

use serde::{Deserialize, Serialize};

use crate::model::{EntityId, ModelError, Term, TermKind, Triple};

pub const TRIPLES_HEADER: &str = "# kbforge-triples v1";
pub const EDGES_HEADER: &str = "# kbforge-edges v1";

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleRecord {
    pub s: String,
    pub p: String,
    pub o_kind: TermKind,
    pub o: String,
}

impl From<&Triple> for TripleRecord {
    fn from(t: &Triple) -> Self {
        TripleRecord {
            s: t.subject.label().to_string(),
            p: t.predicate.clone(),
            o_kind: t.object.kind(),
            o: t.object.text().to_string(),
        }
    }
}

impl From<Triple> for TripleRecord {
    fn from(t: Triple) -> Self {
        TripleRecord::from(&t)
    }
}

impl TryFrom<TripleRecord> for Triple {
    type Error = ModelError;
    fn try_from(r: TripleRecord) -> Result<Self, Self::Error> {
        let object = match r.o_kind {
            TermKind::Entity => Term::entity(&r.o)?,
            TermKind::Literal => Term::Literal(r.o),
        };
        Triple::new(EntityId::new(&r.s)?, &r.p, object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub parent: EntityId,
    pub child: EntityId,
}

fn records<T: for<'de> Deserialize<'de>>(text: &str) -> impl Iterator<Item = Result<(usize, T), JsonlError>> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| JsonlError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
}

pub fn parse_triples(text: &str) -> Result<Vec<Triple>, JsonlError> {
    records::<TripleRecord>(text)
        .map(|r| {
            let (line, rec) = r?;
            Triple::try_from(rec).map_err(|e| JsonlError::Malformed {
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_triples<'a, I: IntoIterator<Item = &'a Triple>>(triples: I) -> String {
    let mut out = String::from(TRIPLES_HEADER);
    out.push('\n');
    for t in triples {
        out.push_str(&serde_json::to_string(&TripleRecord::from(t)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_edges(text: &str) -> Result<Vec<(EntityId, EntityId)>, JsonlError> {
    records::<EdgeRecord>(text)
        .map(|r| r.map(|(_, e)| (e.parent, e.child)))
        .collect()
}

pub fn write_edges<'a, I: IntoIterator<Item = &'a (EntityId, EntityId)>>(edges: I) -> String {
    let mut out = String::from(EDGES_HEADER);
    out.push('\n');
    for (parent, child) in edges {
        let rec = EdgeRecord {
            parent: parent.clone(),
            child: child.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}
