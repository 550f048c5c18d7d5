use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::VerifyError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

pub trait SearchBackend: Send + Sync {
    /// Up to `k` documents, best first.
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, VerifyError>;
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// In-memory corpus ranked by idf-weighted token overlap.
#[derive(Debug, Clone, Default)]
pub struct CorpusBackend {
    docs: Vec<Document>,
    postings: HashMap<String, Vec<usize>>,
}

impl CorpusBackend {
    pub fn new(mut docs: Vec<Document>) -> Self {
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            let distinct: HashSet<String> = tokens(&d.text).collect();
            for t in distinct {
                postings.entry(t).or_default().push(i);
            }
        }
        CorpusBackend { docs, postings }
    }

    /// One document per regular file; the file name is the document id.
    pub fn from_dir(dir: &Path) -> Result<Self, VerifyError> {
        let mut docs = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                docs.push(Document {
                    id: entry.file_name().to_string_lossy().into_owned(),
                    text: std::fs::read_to_string(entry.path())?,
                });
            }
        }
        Ok(Self::new(docs))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl SearchBackend for CorpusBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, VerifyError> {
        let n = self.docs.len() as f64;
        let mut scores: HashMap<usize, f64> = HashMap::new();
        let distinct: HashSet<String> = tokens(query).collect();
        for t in &distinct {
            if let Some(ids) = self.postings.get(t) {
                let idf = (1.0 + n / ids.len() as f64).ln();
                for &i in ids {
                    *scores.entry(i).or_default() += idf;
                }
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked.into_iter().take(k).map(|(i, _)| self.docs[i].clone()).collect())
    }
}

/// Web search over HTTP. Sends `GET {endpoint}?q=..&count=k` with the key
/// from the environment variable `key_env` as a bearer token, and reads
/// `{"results": [{"url"|"id", "snippet"|"text"}]}`.
#[derive(Debug)]
pub struct WebSearchBackend {
    endpoint: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
}

impl WebSearchBackend {
    pub fn new(endpoint: &str, key_env: &str, timeout: Duration) -> Result<Self, VerifyError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| VerifyError::BackendUnreachable(e.to_string()))?;
        Ok(WebSearchBackend {
            endpoint: endpoint.to_string(),
            key: std::env::var(key_env).ok(),
            client,
        })
    }
}

impl SearchBackend for WebSearchBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<Document>, VerifyError> {
        let mut req = self
            .client
            .get(&self.endpoint)
            .query(&[("q", query), ("count", &k.to_string())]);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| VerifyError::BackendUnreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(VerifyError::BackendUnreachable(format!("HTTP {}", resp.status())));
        }
        let body: Value = resp
            .json()
            .map_err(|e| VerifyError::BackendUnreachable(format!("bad body: {e}")))?;
        let results = body.get("results").and_then(Value::as_array).cloned().unwrap_or_default();
        let field = |v: &Value, names: &[&str]| {
            names
                .iter()
                .find_map(|n| v.get(*n).and_then(Value::as_str))
                .unwrap_or_default()
                .to_string()
        };
        Ok(results
            .iter()
            .take(k)
            .map(|r| Document {
                id: field(r, &["url", "id"]),
                text: field(r, &["snippet", "text", "description"]),
            })
            .collect())
    }
}
