//! Compare two synthetic models on the fixture entities and print one
//! aligned view.
//!
//! ```bash
//! cargo run -p kbforge --example compare_models -- Suzhou
//! ```

use kbforge::compare::diff_view;
use kbforge::demo::browse_compare_run;
use kbforge::EntityId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let run = browse_compare_run();
    for (model, t) in &run.totals {
        println!("{model}: {} triples, {} true, {} plausible, {} false", t.triples, t.true_, t.plausible, t.false_);
    }
    let entity = EntityId::new(&std::env::args().nth(1).unwrap_or_else(|| "Suzhou".into()))?;
    let view = diff_view(&run, "exact", "noisy", &entity)?;
    println!("\n{} ({} vs {})", view.entity, view.model_a, view.model_b);
    let cell = |c: &Option<kbforge::compare::DiffCell>| match c {
        Some(c) => format!("{} [{:?}]", c.object, c.verdict),
        None => "-".to_string(),
    };
    for row in &view.rows {
        println!("  {:<14} {:<34} {}", row.predicate, cell(&row.a), cell(&row.b));
    }
    Ok(())
}
