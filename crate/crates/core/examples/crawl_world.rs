//! Crawl the bundled browsing world with several workers, pause half way,
//! resume from the checkpoint, and print the per-layer counts.
//!
//! ```bash
//! cargo run -p kbforge --example crawl_world
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use kbforge::crawl::{Checkpoint, CrawlConfig, Crawler};
use kbforge::demo::{browse_world, BROWSE_SEED};
use kbforge::oracle::synthetic::SyntheticOracle;
use kbforge::EntityId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let oracle = SyntheticOracle::new(Arc::new(browse_world()));
    let mut config = CrawlConfig::new(EntityId::new(BROWSE_SEED)?);
    config.workers = 4;
    let crawler = Crawler::new(config.clone(), &oracle, &oracle);

    let paused = crawler.run_until(10)?;
    println!("paused after {} entities, frontier {}", paused.completed, paused.frontier.len());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("checkpoint.json");
    Checkpoint::new(&config, paused).write(&path)?;
    let state = crawler.resume(Checkpoint::read(&path)?)?;
    println!(
        "finished: {} entities, {} triples, spent {} ({:?})",
        state.completed,
        state.triples.len(),
        state.spent,
        state.stop_reason
    );

    let mut layers: BTreeMap<u32, usize> = BTreeMap::new();
    for e in &state.visited {
        *layers.entry(state.layer_of(e).unwrap_or(0)).or_default() += 1;
    }
    for (layer, n) in layers {
        println!("  layer {layer}: {n}");
    }
    let skew = state.skew_report(config.per_entity_cap);
    println!("largest entity: {:?}", skew.triple_counts.iter().max_by_key(|(_, n)| **n));
    Ok(())
}
