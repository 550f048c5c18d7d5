//! Shared domain vocabulary: labels, entities, terms, triples and namespaces.
//!
//! Entities are identified by their normalized label. Stores are free to
//! intern labels, but every external format carries labels only.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Predicate used for class membership.
pub const INSTANCE_OF: &str = "instanceOf";
/// Meta-relation holding the shortest-path distance from the seed.
pub const BFS_LAYER: &str = "bfsLayer";
/// Meta-relation pointing at each shortest-path predecessor.
pub const BFS_PARENT: &str = "bfsParent";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("malformed percent-encoding in {0:?}")]
    BadEncoding(String),
    #[error("namespace {0:?} must be an absolute IRI ending in '/'")]
    BadNamespace(String),
}

/// Applies NFC, collapses whitespace runs to one space and trims.
pub fn normalize_label(raw: &str) -> Result<String, ModelError> {
    let composed: String = raw.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    if out.is_empty() {
        Err(ModelError::EmptyLabel)
    } else {
        Ok(out)
    }
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'.' | b'~' | b'-')
}

/// Encodes a normalized label as the local part of an entity IRI.
///
/// Spaces become `_`; a literal underscore and every byte outside
/// `[A-Za-z0-9.~-]` is percent-encoded, which keeps the mapping injective.
pub fn encode_entity_iri(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for &b in label.as_bytes() {
        if b == b' ' {
            out.push('_');
        } else if is_unreserved(b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// Inverse of [`encode_entity_iri`].
pub fn decode_entity_iri(local: &str) -> Result<String, ModelError> {
    let bytes = local.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'_' => {
                out.push(b' ');
                i += 1;
            }
            b'%' => {
                let hex = bytes
                    .get(i + 1..i + 3)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| ModelError::BadEncoding(local.to_string()))?;
                out.push(hex);
                i += 3;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8(out).map_err(|_| ModelError::BadEncoding(local.to_string()))
}

/// An entity, identified by its canonical (normalized) label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        normalize_label(raw).map(EntityId)
    }

    /// Wraps a label already known to be normalized.
    pub(crate) fn from_normalized(label: impl Into<String>) -> Self {
        EntityId(label.into())
    }

    pub fn label(&self) -> &str {
        &self.0
    }

    pub fn iri_local(&self) -> String {
        encode_entity_iri(&self.0)
    }

    pub fn from_iri_local(local: &str) -> Result<Self, ModelError> {
        Self::new(&decode_entity_iri(local)?)
    }
}

impl TryFrom<String> for EntityId {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<EntityId> for String {
    fn from(value: EntityId) -> Self {
        value.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Object position of a triple: an entity reference or a plain literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Entity(EntityId),
    Literal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Entity,
    Literal,
}

impl Term {
    pub fn entity(label: &str) -> Result<Self, ModelError> {
        EntityId::new(label).map(Term::Entity)
    }

    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal(value.into())
    }

    pub fn kind(&self) -> TermKind {
        match self {
            Term::Entity(_) => TermKind::Entity,
            Term::Literal(_) => TermKind::Literal,
        }
    }

    /// The label or literal text.
    pub fn text(&self) -> &str {
        match self {
            Term::Entity(e) => e.label(),
            Term::Literal(s) => s,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Term::Entity(e) => Some(e),
            Term::Literal(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Entity(e) => write!(f, "<{e}>"),
            Term::Literal(s) => write!(f, "{s:?}"),
        }
    }
}

/// Serialized as the JSON-lines record `{s, p, o_kind, o}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "crate::io::jsonl::TripleRecord", into = "crate::io::jsonl::TripleRecord")]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    /// Builds a triple, normalizing the predicate label.
    pub fn new(subject: EntityId, predicate: &str, object: Term) -> Result<Self, ModelError> {
        Ok(Triple {
            subject,
            predicate: normalize_label(predicate)?,
            object,
        })
    }

    /// Convenience constructor for tests and fixtures.
    pub fn entity(s: &str, p: &str, o: &str) -> Result<Self, ModelError> {
        Triple::new(EntityId::new(s)?, p, Term::entity(o)?)
    }

    pub fn literal(s: &str, p: &str, o: &str) -> Result<Self, ModelError> {
        Triple::new(EntityId::new(s)?, p, Term::literal(o))
    }

    /// True for the structural `bfsLayer` / `bfsParent` annotations.
    pub fn is_meta(&self) -> bool {
        is_meta_predicate(&self.predicate)
    }
}

pub fn is_meta_predicate(p: &str) -> bool {
    p == BFS_LAYER || p == BFS_PARENT
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> {} {}", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Namespaces {
    pub entity_prefix: String,
    pub property_prefix: String,
}

impl Default for Namespaces {
    fn default() -> Self {
        Namespaces {
            entity_prefix: "https://gptkb.org/entity/".into(),
            property_prefix: "https://gptkb.org/prop/".into(),
        }
    }
}

impl Namespaces {
    pub fn new(entity_prefix: &str, property_prefix: &str) -> Result<Self, ModelError> {
        for p in [entity_prefix, property_prefix] {
            let absolute = p
                .split_once("://")
                .is_some_and(|(scheme, rest)| !scheme.is_empty() && !rest.is_empty());
            if !absolute || !p.ends_with('/') {
                return Err(ModelError::BadNamespace(p.to_string()));
            }
        }
        Ok(Namespaces {
            entity_prefix: entity_prefix.to_string(),
            property_prefix: property_prefix.to_string(),
        })
    }

    pub fn entity_iri(&self, e: &EntityId) -> String {
        format!("{}{}", self.entity_prefix, e.iri_local())
    }

    pub fn property_iri(&self, p: &str) -> String {
        format!("{}{}", self.property_prefix, encode_entity_iri(p))
    }
}
