//! Shared by the integration tests and the acceptance runner. Every check
//! panics with a message on failure and returns a one-line summary.
#![allow(dead_code)]

pub mod checks;
pub mod naive;
pub mod oracles;
pub mod random;
pub mod service_suite;

use std::path::PathBuf;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
