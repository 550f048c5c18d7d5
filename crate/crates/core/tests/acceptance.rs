//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! ```bash
//! cargo test -p kbforge --test acceptance
//! ```

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};

use common::{checks, service_suite as suite};

fn run(name: &str, check: impl FnOnce() -> String) -> bool {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("FAIL  {name}: {}", msg.lines().next().unwrap_or(""));
            false
        }
    }
}

fn service_contract() -> String {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    suite::fixture_files_match_their_generators();
    rt.block_on(async {
        suite::entity_pages().await;
        suite::search_endpoint().await;
        suite::query_endpoint().await;
        suite::cross_product_times_out().await;
        suite::compare_endpoints().await;
        suite::every_response_is_logged_with_cache_policy().await;
    });
    suite::openapi_lists_every_route();
    "entity, search, query and compare goldens; 404 with suggestions; 408 on timeout".into()
}

fn query_engine() -> String {
    let parse = checks::query_listings_parse();
    let random = checks::random_queries(500);
    let symmetry = checks::symmetry_fixture();
    let dump = checks::full_dump_symmetry().unwrap_or_else(|| "full-dump regression skipped (KBFORGE_FULL_DUMP unset)".into());
    format!("{parse}; {random}; {symmetry}; {dump}")
}

fn verification() -> String {
    format!("{}; {}", checks::verification_determinism(), checks::verification_false_rate())
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let results = [
        run("crawl reachability", checks::crawl_reachability),
        run("parallelism soundness", checks::crawl_parallelism),
        run("consolidation oracle", checks::consolidation_oracle),
        run("turtle round-trip", || checks::turtle_roundtrip(1_000)),
        run("query engine", query_engine),
        run("timeout", checks::timeout_on_large_store),
        run("statistics consistency", checks::statistics_consistency),
        run("verification pipeline", verification),
        run("service contract", service_contract),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
