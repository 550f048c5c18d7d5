//! Statistics and the five analysis queries over the fixture store.
//!
//! ```bash
//! cargo run -p kbforge --example kb_statistics
//! ```

use kbforge::analytics::{compute_stats, run_canned_analyses};
use kbforge::demo::browse_store;
use kbforge::meta::overlay_from_triples;
use kbforge::query::EvalOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = browse_store();
    let meta: Vec<_> = store.iter().filter(|t| t.is_meta()).collect();
    let overlay = overlay_from_triples(&meta);
    let reference = vec!["Suzhou".to_string(), "Venice".to_string(), "Li Wei".to_string()];
    let stats = compute_stats(&store, Some(&overlay), None, Some(&reference));
    println!("{}", serde_json::to_string_pretty(&stats)?);
    print!("{}", run_canned_analyses(&store, &EvalOptions::default()).to_text());
    Ok(())
}
