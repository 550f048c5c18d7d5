//! Golden-file HTTP suite over the browsing fixture.

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use kbforge::compare::CompareRun;
use kbforge::demo;
use kbforge::io::turtle::{parse_turtle_store, serialize_sorted};
use kbforge::oracle::synthetic::{SyntheticWorld, WorldParams};
use kbforge::service::{get_request, router, AppState, MAX_QUERY_BYTES};
use kbforge::{Namespaces, Triple, TripleStore};
use serde_json::Value;
use tower::ServiceExt;

use super::fixture_path;

fn blessing() -> bool {
    std::env::var_os("KBFORGE_BLESS").is_some()
}

/// Compares `actual` with a checked-in file, or rewrites the file when
/// `KBFORGE_BLESS` is set.
fn check_file(path: PathBuf, actual: &str) {
    if blessing() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(expected, actual, "{} differs; rerun with KBFORGE_BLESS=1 after review", path.display());
}

fn browse_store() -> TripleStore {
    let text = std::fs::read_to_string(fixture_path("browse.ttl")).unwrap();
    parse_turtle_store(&text, &Namespaces::default()).unwrap()
}

fn browse_run() -> CompareRun {
    CompareRun::read(&fixture_path("browse_run.json")).unwrap()
}

fn app() -> axum::Router {
    router(AppState::new(browse_store()).with_run("browse", browse_run()))
}

struct Reply {
    status: StatusCode,
    cache: Option<String>,
    body: Value,
}

async fn send(app: &axum::Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let cache = resp
        .headers()
        .get(header::CACHE_CONTROL)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    Reply { status, cache, body }
}

async fn get(app: &axum::Router, uri: &str) -> Reply {
    send(app, get_request(uri)).await
}

fn post(uri: &str, body: &str) -> Request<Body> {
    Request::builder()
        .method("POST")
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/sparql-query")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("elapsed_ms");
            m.values_mut().for_each(strip_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn golden(name: &str, reply: &Reply) {
    let mut body = reply.body.clone();
    strip_timing(&mut body);
    let doc = serde_json::json!({"status": reply.status.as_u16(), "body": body});
    let text = serde_json::to_string_pretty(&doc).unwrap() + "\n";
    check_file(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json")), &text);
}

pub fn fixture_files_match_their_generators() {
    let ttl = serialize_sorted(&demo::browse_triples(), &Namespaces::default());
    check_file(fixture_path("browse.ttl"), &ttl);
    check_file(fixture_path("browse_run.json"), &demo::browse_compare_run().to_json());
}

pub async fn entity_pages() {
    let app = app();
    let store = browse_store();

    let r = get(&app, "/entity/Suzhou").await;
    assert_eq!(r.status, StatusCode::OK);
    golden("entity_suzhou", &r);
    let statements = r.body["statements"].as_array().unwrap();
    assert_eq!(statements.len(), 6);
    let links = statements
        .iter()
        .filter(|s| s["o_kind"] == "entity" && !s["p"].as_str().unwrap().starts_with("bfs"))
        .count();
    assert_eq!(links, 3);
    // Statement count equals the subject's triples (meta included).
    let suzhou = kbforge::EntityId::new("Suzhou").unwrap();
    assert_eq!(statements.len(), store.triples_of(&suzhou).len());

    let r = get(&app, "/entity/EMNLP_2025").await;
    golden("entity_seed", &r);
    assert_eq!(r.body["bfsLayer"], "0");
    assert!(r.body.get("bfsParents").is_none());

    let r = get(&app, "/entity/Suzhounese").await;
    golden("entity_suzhounese", &r);
    assert_eq!(r.body["bfsLayer"], "4");
    let parents = r.body["bfsParents"].as_array().unwrap();
    assert!(parents.len() >= 2);
    // Following a parent moves one layer up.
    let up = get(&app, &format!("/entity/{}", parents[0]["iri_local"].as_str().unwrap())).await;
    assert_eq!(up.body["bfsLayer"], "3");

    // Leaf entities carry only their meta-relations.
    let r = get(&app, "/entity/city").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["statements"].as_array().unwrap().len(), 2);
    assert_eq!(r.body["bfsLayer"], "2");
    assert_eq!(r.body["incoming_count"], 1);

    let r = get(&app, "/entity/Suzhow").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    golden("entity_unknown", &r);
    let labels: Vec<&str> = r.body["suggestions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["label"].as_str().unwrap())
        .collect();
    assert!(labels.contains(&"Suzhou"));
    assert!(labels.len() <= 5);
    assert_eq!(r.cache.as_deref(), Some("no-store"));
}

pub async fn search_endpoint() {
    let app = app();
    let r = get(&app, "/search?q=suzhou").await;
    golden("search_suzhou", &r);
    assert_eq!(r.body["total"], 3);
    assert_eq!(r.cache.as_deref(), Some("public, max-age=300"));

    let r = get(&app, "/search?q=suzhou&limit=1").await;
    assert_eq!(r.body["total"], 3);
    assert_eq!(r.body["results"].as_array().unwrap().len(), 1);
    assert_eq!(r.body["results"][0]["label"], "Suzhou");
    assert_eq!(r.body["results"][0]["snippet_class"], "city");

    assert_eq!(get(&app, "/search?q=").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/search?q=%20%20").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/search").await.status, StatusCode::BAD_REQUEST);

    // The small store with only two matching labels.
    let e = |s, p, o| Triple::entity(s, p, o).unwrap();
    let small = TripleStore::from_triples([
        e("Suzhou", "instanceOf", "city"),
        e("Hangzhou", "instanceOf", "city"),
        e("Suzhou Metro", "instanceOf", "rapid transit system"),
        e("Suzhou Metro", "operatesIn", "Suzhou"),
        Triple::literal("Suzhou Metro", "length", "1,276 km").unwrap(),
        e("Suzhou", "locatedIn", "China"),
    ])
    .unwrap();
    let small = router(AppState::new(small));
    let r = get(&small, "/search?q=suzhou").await;
    assert_eq!(r.body["total"], 2);
    let r = get(&small, "/search?q=suzhou&limit=1").await;
    assert_eq!((r.body["total"].as_u64(), r.body["results"].as_array().unwrap().len()), (Some(2), 1));
}

const GENDERS: &str = include_str!("../../queries/genders.rq");

pub async fn query_endpoint() {
    let app = app();
    let r = send(&app, post("/query", GENDERS)).await;
    assert_eq!(r.status, StatusCode::OK);
    golden("query_genders", &r);
    assert_eq!(r.body["results"]["bindings"].as_array().unwrap().len(), 2);
    assert_eq!(r.body["rows"], 2);
    assert!(r.body["elapsed_ms"].is_u64());
    assert_eq!(r.cache.as_deref(), Some("no-store"));

    let encoded: String = url_encode(GENDERS);
    let g = get(&app, &format!("/query?query={encoded}")).await;
    assert_eq!(g.status, StatusCode::OK);
    assert_eq!(g.body["results"], r.body["results"]);

    let r = send(&app, post("/query", "SELECT ?x WHERE {\n  ?x ?p \n}")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    golden("query_malformed", &r);
    assert_eq!(r.body["line"], 3);
    assert!(r.body["column"].is_u64());

    let r = send(&app, post("/query", "SELECT ?x WHERE { ?x ?p ?o } UNION { ?x ?p ?o }")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = send(&app, post("/query", "SELECT ?x WHERE { ?x ?p ?o . BIND(?o + 1 AS ?y) }")).await;
    assert!(r.status == StatusCode::BAD_REQUEST || r.status == StatusCode::OK);

    let big = format!("SELECT ?x WHERE {{ ?x ?p ?o }} #{}", "x".repeat(MAX_QUERY_BYTES));
    assert_eq!(send(&app, post("/query", &big)).await.status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(send(&app, post("/query", "  ")).await.status, StatusCode::BAD_REQUEST);
}

fn url_encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

pub async fn cross_product_times_out() {
    let world = SyntheticWorld::generate(WorldParams::new(5, 20_000));
    let store = TripleStore::from_triples(world.triples()).unwrap();
    assert!(store.len() > 20_000);
    let app = router(AppState::new(store).with_timeout(Duration::from_secs(1)));
    let bomb = "SELECT (COUNT(*) AS ?n) WHERE { ?a ?p ?b . ?c ?q ?d . ?e ?r ?f }";
    let start = Instant::now();
    let r = send(&app, post("/query", bomb)).await;
    let took = start.elapsed();
    assert_eq!(r.status, StatusCode::REQUEST_TIMEOUT);
    assert_eq!(r.body["error"], "timeout");
    assert_eq!(r.body["timeout_ms"], 1000);
    assert!(took < Duration::from_secs(2), "took {took:?}");
}

pub async fn compare_endpoints() {
    let app = app();
    let run = browse_run();
    let r = get(&app, "/compare/runs").await;
    golden("compare_runs", &r);
    assert_eq!(r.body["runs"][0]["name"], "browse");

    let r = get(&app, "/compare/browse/exact/noisy/Suzhou").await;
    assert_eq!(r.status, StatusCode::OK);
    golden("compare_suzhou", &r);
    assert_eq!(r.body["run_totals"]["a"], serde_json::to_value(run.totals["exact"]).unwrap());
    assert_eq!(r.body["run_totals"]["b"], serde_json::to_value(run.totals["noisy"]).unwrap());

    let r = get(&app, "/compare/browse/noisy/noisy/Li_Wei").await;
    let rows = r.body["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|row| row["a"] == row["b"] && !row["a"].is_null()));

    for uri in [
        "/compare/browse/exact/gpt/Suzhou",
        "/compare/nope/exact/noisy/Suzhou",
        "/compare/browse/exact/noisy/Jiangsu",
    ] {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(r.body["error"], "not_found");
    }
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub async fn every_response_is_logged_with_cache_policy() {
    let buf = SharedBuf::default();
    let app = router(AppState::new(browse_store()).with_request_log(Box::new(buf.clone())));
    for uri in ["/entity/Suzhou", "/search?q=x", "/nowhere", "/compare/runs"] {
        let r = get(&app, uri).await;
        assert!(r.cache.is_some(), "{uri}");
    }
    let log = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["path"], "/entity/Suzhou");
    assert_eq!(lines[2]["status"], 404);
    assert!(lines.iter().all(|l| l["method"] == "GET" && l["elapsed_ms"].is_u64()));
}

/// The published API description names every route the router serves.
pub fn openapi_lists_every_route() {
    let doc = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/openapi.yaml")).unwrap();
    for route in [
        "/entity/{iri_local}:",
        "/search:",
        "/query:",
        "/compare/runs:",
        "/compare/{run}/{model_a}/{model_b}/{entity}:",
    ] {
        assert!(doc.contains(route), "openapi.yaml lacks {route}");
    }
    for status in ["\"404\":", "\"408\":", "\"413\":"] {
        assert!(doc.contains(status), "openapi.yaml lacks {status}");
    }
}
