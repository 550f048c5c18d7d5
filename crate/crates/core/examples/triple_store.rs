//! Load a Turtle file, look things up through each index, search labels,
//! and write the store back out.
//!
//! ```bash
//! cargo run -p kbforge --example triple_store
//! ```

use kbforge::io::turtle::{parse_turtle_store, serialize_turtle};
use kbforge::model::{Term, INSTANCE_OF};
use kbforge::{EntityId, Namespaces, TriplePattern};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ns = Namespaces::default();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/browse.ttl"))?;
    let store = parse_turtle_store(&text, &ns)?;
    println!("{} triples, {} subjects", store.len(), store.distinct_subjects());

    let suzhou = EntityId::new("Suzhou")?;
    println!("\nabout Suzhou:");
    for t in store.triples_of(&suzhou) {
        println!("  {} {}", t.predicate, t.object.text());
    }
    let humans = TriplePattern::any()
        .with_predicate(INSTANCE_OF)
        .with_object(Term::entity("human")?);
    let names: Vec<String> = store.matches(&humans).map(|t| t.subject.to_string()).collect();
    println!("\nhumans: {names:?}");
    let pointing_in = TriplePattern::any().with_object(Term::Entity(suzhou.clone()));
    println!("triples pointing at Suzhou: {}", store.matches(&pointing_in).count());

    let hits = store.search_entities("suzhou", 2);
    println!("\nsearch 'suzhou': {} total, first page {:?}", hits.total, hits.results);
    println!("IRI of Suzhou Metro: {}", ns.entity_iri(&EntityId::new("Suzhou Metro")?));

    let again = serialize_turtle(&store, &ns);
    println!("\nre-serialized {} bytes, identical: {}", again.len(), again == text);
    Ok(())
}
