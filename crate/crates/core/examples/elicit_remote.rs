//! One elicitation call against a chat-completions endpoint.
//!
//! Reads `KBFORGE_ORACLE_ENDPOINT`, `KBFORGE_ORACLE_MODEL` and the key in
//! `KBFORGE_ORACLE_API_KEY`. Without a key it only prints the request it
//! would make.
//!
//! ```bash
//! KBFORGE_ORACLE_API_KEY=... cargo run -p kbforge --example elicit_remote -- "Vannevar Bush"
//! ```

use kbforge::oracle::remote::{triples_schema, RemoteOracle};
use kbforge::oracle::{Elicitor, OracleConfig, PromptTemplate};
use kbforge::EntityId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let entity = EntityId::new(&std::env::args().nth(1).unwrap_or_else(|| "Vannevar Bush".into()))?;
    let config = OracleConfig::from_env();
    let template = PromptTemplate::default();
    if std::env::var(&config.api_key_env).is_err() {
        println!("no key in {}; request preview:", config.api_key_env);
        println!("endpoint: {}\nmodel: {}", config.endpoint, config.model);
        println!("system: {}\nuser: {}", template.system, template.render(&entity));
        println!("schema: {}", serde_json::to_string_pretty(&triples_schema())?);
        println!("prompt hash: {}", template.hash());
        return Ok(());
    }
    let oracle = RemoteOracle::new(config, template)?;
    let result = oracle.elicit(&entity)?;
    for (p, o) in &result.pairs {
        println!("{p}\t{o}");
    }
    println!("{} pairs, cost {}", result.pairs.len(), result.cost);
    Ok(())
}
