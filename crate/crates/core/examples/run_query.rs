//! Run a query (from a file argument, or the five bundled analysis
//! queries) against the fixture store, with its plan.
//!
//! ```bash
//! cargo run -p kbforge --example run_query
//! cargo run -p kbforge --example run_query -- crates/core/queries/symmetry.rq
//! ```

use std::time::Duration;

use kbforge::analytics::CANNED_QUERIES;
use kbforge::demo::browse_store;
use kbforge::query::{evaluate, explain, parse_query, EvalOptions};
use kbforge::Namespaces;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = browse_store();
    let ns = Namespaces::default();
    let queries: Vec<(String, String)> = match std::env::args().nth(1) {
        Some(path) => vec![(path.clone(), std::fs::read_to_string(&path)?)],
        None => CANNED_QUERIES.iter().map(|(n, q)| (n.to_string(), q.to_string())).collect(),
    };
    let opts = EvalOptions::default().with_timeout(Duration::from_secs(10));
    for (name, text) in queries {
        println!("## {name}");
        let plan = parse_query(&text)?;
        print!("{}", explain(&plan, &store, &ns));
        let table = evaluate(&plan, &store, &opts)?;
        println!();
        print!("{}", table.to_text());
        println!();
    }

    match parse_query("SELECT ?x WHERE {\n  ?x ?p\n}") {
        Err(e) => println!("malformed query: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
