//! Shortest-path layers and all shortest-path parents, computed from crawl
//! discovery edges and written back as meta-triples.
//!
//! ```bash
//! cargo run -p kbforge --example bfs_layers
//! ```

use std::sync::Arc;

use kbforge::crawl::{CrawlConfig, Crawler};
use kbforge::demo::{browse_world, BROWSE_SEED};
use kbforge::meta::{compute_bfs_meta, edges_from_triples, materialize_meta};
use kbforge::oracle::synthetic::SyntheticOracle;
use kbforge::EntityId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = EntityId::new(BROWSE_SEED)?;
    let oracle = SyntheticOracle::new(Arc::new(browse_world()));
    let mut config = CrawlConfig::new(seed.clone());
    config.workers = 8;
    let state = Crawler::new(config, &oracle, &oracle).run()?;

    let overlay = compute_bfs_meta(&state.discovery_edges, &seed)?;
    let from_triples = compute_bfs_meta(&edges_from_triples(&state.triples), &seed)?;
    println!("discovery and triple edges agree: {}", overlay.layers == from_triples.layers);

    for name in ["Suzhou", "Suzhounese", "Zhang Min"] {
        let e = EntityId::new(name)?;
        let parents: Vec<&str> = overlay.parents_of(&e).map(|p| p.label()).collect();
        println!("{name}: layer {:?}, parents {parents:?}", overlay.layer(&e));
    }
    let meta = materialize_meta(&overlay);
    println!("{} meta-triples, first: {}", meta.len(), meta[0]);
    Ok(())
}
