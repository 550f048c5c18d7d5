//! Serve the fixture store and compare run over HTTP.
//!
//! ```bash
//! cargo run -p kbforge --example serve_fixture -- 127.0.0.1:8080
//! curl 'http://127.0.0.1:8080/search?q=suzhou'
//! curl 'http://127.0.0.1:8080/entity/Suzhounese'
//! curl --data-binary @crates/core/queries/genders.rq http://127.0.0.1:8080/query
//! ```
//!
//! With `--once` it answers one in-process request and exits.

use std::time::Duration;

use kbforge::demo::{browse_compare_run, browse_store};
use kbforge::service::{get_request, router, AppState};
use tower::ServiceExt;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let state = AppState::new(browse_store())
        .with_timeout(Duration::from_secs(100))
        .with_run("browse", browse_compare_run())
        .with_request_log(Box::new(std::io::stderr()));
    let app = router(state);
    let arg = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    if arg == "--once" {
        let resp = app.oneshot(get_request("/entity/Suzhounese")).await?;
        println!("{}", resp.status());
        return Ok(());
    }
    let listener = tokio::net::TcpListener::bind(&arg).await?;
    println!("listening on http://{arg}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
