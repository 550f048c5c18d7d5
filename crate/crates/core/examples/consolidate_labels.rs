//! Greedy canonicalization of near-duplicate relation labels with the
//! trigram embedder, and the rewrite it implies.
//!
//! ```bash
//! cargo run -p kbforge --example consolidate_labels
//! ```

use kbforge::consolidate::{apply_mapping, build_mappings};
use kbforge::oracle::local::TrigramEmbedder;
use kbforge::Triple;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = |s, p, o| Triple::entity(s, p, o);
    let triples = vec![
        e("Ann", "spouse", "Bob")?,
        e("Bob", "spouse", "Ann")?,
        e("Cy", "spouse", "Dee")?,
        e("Dee", "spouses", "Cy")?,
        e("Eve", "birthPlace", "Paris")?,
        e("Fay", "birthplace", "Rome")?,
        e("Gus", "placeOfBirth", "Oslo")?,
        e("Ann", "instanceOf", "human")?,
        e("Bob", "instanceOf", "human")?,
        e("Cy", "instanceOf", "humans")?,
    ];
    for threshold in [0.9, 0.7] {
        let (relations, classes) = build_mappings(&triples, threshold, &TrigramEmbedder)?;
        let (rewritten, report) = apply_mapping(&triples, &relations, &classes)?;
        println!("threshold {threshold}:");
        for m in report.merges.iter().chain(&report.class_merges) {
            println!("  {} -> {} ({:.3})", m.from, m.to, m.similarity);
        }
        println!(
            "  relations {} -> {}, classes {} -> {}, {} triples remain",
            report.relations_before,
            report.relations_after,
            report.classes_before,
            report.classes_after,
            rewritten.len()
        );
    }
    Ok(())
}
