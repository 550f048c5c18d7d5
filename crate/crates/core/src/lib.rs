//! Recursive knowledge-base materialization.
//!
//! A seed entity is expanded breadth-first by asking a knowledge oracle for
//! facts about each entity; named entities among the returned objects are
//! queued for their own round of elicitation. The resulting triples are
//! canonicalized, annotated with their BFS provenance, indexed in an
//! in-process store, exported as Turtle, queried with a SPARQL subset,
//! sampled for precision estimates and served over HTTP.

pub mod analytics;
pub mod compare;
pub mod consolidate;
pub mod crawl;
pub mod demo;
pub mod io;
pub mod jobs;
pub mod meta;
pub mod model;
pub mod oracle;
pub mod query;
pub mod service;
pub mod store;
pub mod verify;

pub use model::{EntityId, Namespaces, Term, TermKind, Triple};
pub use store::{TriplePattern, TripleStore};
