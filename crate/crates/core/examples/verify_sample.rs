//! Sample triples from a noisy crawl, verify them against a corpus written
//! from the ground truth, and report precision. The verdicts are also
//! written as an annotation sheet.
//!
//! ```bash
//! cargo run -p kbforge --example verify_sample
//! ```

use std::sync::Arc;

use kbforge::crawl::{CrawlConfig, Crawler};
use kbforge::oracle::synthetic::{SyntheticOracle, SyntheticWorld, WorldParams};
use kbforge::verify::{
    aggregate_precision, corpus_from_triples, sample_triples, verify_batch, write_manual_csv, Label, Mode, RuleJudge,
    DEFAULT_TOP_K,
};
use kbforge::{EntityId, TripleStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = Arc::new(SyntheticWorld::generate(WorldParams::new(42, 2_000)));
    let oracle = SyntheticOracle::new(world.clone()).with_hallucination(0.2, 7);
    let mut config = CrawlConfig::new(EntityId::new("E0")?);
    config.workers = 4;
    let state = Crawler::new(config, &oracle, &oracle).run()?;
    let store = TripleStore::from_triples(state.triples)?;

    let n = store.len().min(200);
    let sample = sample_triples(&store, n, 1, true)?;
    let corpus = corpus_from_triples(&world.triples());
    for mode in [Mode::Triple, Mode::Subject] {
        let batch = verify_batch(&sample, mode, &corpus, &RuleJudge, DEFAULT_TOP_K, 4, None)?;
        let report = aggregate_precision(&batch.verdicts, Some(1))?;
        println!("{mode:?} mode over {} triples:", report.sample_size);
        for l in Label::all(mode) {
            println!("  {l:?}: {} ({:.1}%)", report.counts[&l], 100.0 * report.fraction(l));
        }
        if mode == Mode::Triple {
            let mut sheet = Vec::new();
            write_manual_csv(&mut sheet, &batch.verdicts[..5])?;
            println!("annotation sheet head:\n{}", String::from_utf8(sheet)?);
        }
    }
    Ok(())
}
