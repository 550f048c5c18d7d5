//! HTTP oracle speaking the chat-completions / embeddings JSON protocol.
//!
//! Triple output is requested as structured JSON under a fixed schema and
//! validated on arrival; in strict mode a malformed answer is retried and
//! finally rejected, in repair mode malformed rows are dropped. Only
//! well-formed pairs leave this module.

use std::time::Duration;

use serde_json::{json, Value};

use super::{
    l2_normalize, normalize_pairs, ElicitationResult, Elicitor, Embedder, EntityRecognizer, OracleConfig,
    OracleError, PromptTemplate, TokenBucket, TokenUsage, ValidationMode,
};
use crate::model::{normalize_label, EntityId};

const NER_BATCH: usize = 50;

pub fn triples_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "triples": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "predicate": {"type": "string"},
                        "object": {"type": "string"}
                    },
                    "required": ["predicate", "object"],
                    "additionalProperties": false
                }
            }
        },
        "required": ["triples"],
        "additionalProperties": false
    })
}

fn entities_schema() -> Value {
    json!({
        "type": "object",
        "properties": {"entities": {"type": "array", "items": {"type": "string"}}},
        "required": ["entities"],
        "additionalProperties": false
    })
}

/// Validates a structured triple response.
///
/// Accepts either a bare array of `{predicate, object}` rows or an object
/// wrapping it under `"triples"`.
pub fn validate_triples(content: &str, mode: ValidationMode) -> Result<Vec<(String, String)>, String> {
    let value: Value = serde_json::from_str(content).map_err(|e| format!("not JSON: {e}"))?;
    let rows = match &value {
        Value::Array(rows) => rows,
        Value::Object(o) => match o.get("triples") {
            Some(Value::Array(rows)) => rows,
            _ => return Err("missing \"triples\" array".into()),
        },
        _ => return Err("expected an array or object".into()),
    };
    let mut pairs = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        match parse_row(row, mode) {
            Ok(pair) => pairs.push(pair),
            Err(why) if mode == ValidationMode::Strict => return Err(format!("row {i}: {why}")),
            Err(_) => {}
        }
    }
    Ok(pairs)
}

fn parse_row(row: &Value, mode: ValidationMode) -> Result<(String, String), String> {
    let obj = row.as_object().ok_or("row is not an object")?;
    if mode == ValidationMode::Strict {
        if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "predicate" | "object" | "subject")) {
            return Err(format!("unexpected field {k:?}"));
        }
    }
    let field = |name: &str| -> Result<String, String> {
        let s = match obj.get(name) {
            Some(Value::String(s)) => s.clone(),
            Some(v @ (Value::Number(_) | Value::Bool(_))) if mode == ValidationMode::Repair => v.to_string(),
            Some(_) => return Err(format!("{name} is not a string")),
            None => return Err(format!("missing {name}")),
        };
        normalize_label(&s).map_err(|_| format!("{name} is empty"))
    };
    Ok((field("predicate")?, field("object")?))
}

/// Remote oracle client. Blocking; safe to share between worker threads.
pub struct RemoteOracle {
    config: OracleConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    template: PromptTemplate,
    ner_template: PromptTemplate,
    embedding_endpoint: String,
    embedding_model: String,
    bucket: Option<TokenBucket>,
    backoff: Duration,
}

impl RemoteOracle {
    pub fn new(config: OracleConfig, template: PromptTemplate) -> Result<Self, OracleError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| OracleError::Unreachable(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        let embedding_endpoint = match config.endpoint.strip_suffix("chat/completions") {
            Some(base) => format!("{base}embeddings"),
            None => config.endpoint.clone(),
        };
        Ok(RemoteOracle {
            bucket: config.requests_per_second.map(TokenBucket::new),
            client,
            api_key,
            template,
            ner_template: PromptTemplate::ner(),
            embedding_endpoint,
            embedding_model: "text-embedding-3-small".into(),
            backoff: Duration::from_millis(500),
            config,
        })
    }

    pub fn with_embeddings(mut self, endpoint: &str, model: &str) -> Self {
        self.embedding_endpoint = endpoint.to_string();
        self.embedding_model = model.to_string();
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    /// POSTs JSON, retrying transport failures and non-success statuses.
    fn post(&self, url: &str, body: &Value) -> Result<Value, OracleError> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            if let Some(b) = &self.bucket {
                b.acquire();
            }
            let mut req = self.client.post(url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Value>().map_err(|e| OracleError::Unreachable(format!("bad body: {e}")));
                }
                Ok(resp) => last = format!("HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(OracleError::Unreachable(last))
    }

    /// One structured chat call; returns the message content and usage.
    pub fn chat(&self, system: &str, user: &str, schema_name: &str, schema: Value) -> Result<(String, TokenUsage), OracleError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user}
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": schema_name, "strict": true, "schema": schema}
            }
        });
        let resp = self.post(&self.config.endpoint, &body)?;
        let content = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| OracleError::SchemaViolation("response has no message content".into()))?
            .to_string();
        let usage = TokenUsage {
            prompt: resp.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion: resp.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        };
        Ok((content, usage))
    }
}

impl Elicitor for RemoteOracle {
    fn elicit(&self, entity: &EntityId) -> Result<ElicitationResult, OracleError> {
        let mut usage = TokenUsage::default();
        let mut last_err = String::new();
        for _ in 0..=self.config.max_retries {
            let (content, u) = self.chat(&self.template.system, &self.template.render(entity), "triples", triples_schema())?;
            usage.add(u);
            match validate_triples(&content, self.config.validation) {
                Ok(pairs) => {
                    return Ok(ElicitationResult {
                        subject: entity.clone(),
                        pairs: normalize_pairs(pairs),
                        raw_response: content,
                        usage,
                        cost: self.config.unit_costs().cost(usage),
                    })
                }
                Err(e) => last_err = e,
            }
        }
        Err(OracleError::SchemaViolation(last_err))
    }

    fn model_name(&self) -> String {
        self.config.model.clone()
    }
}

impl EntityRecognizer for RemoteOracle {
    fn named_entities(&self, candidates: &[String]) -> Result<Vec<String>, OracleError> {
        let mut keep = std::collections::HashSet::new();
        for batch in candidates.chunks(NER_BATCH) {
            let user = self
                .ner_template
                .user
                .replace("{candidates}", &serde_json::to_string(batch).expect("strings serialize"));
            let (content, _) = self.chat(&self.ner_template.system, &user, "entities", entities_schema())?;
            let v: Value = serde_json::from_str(&content)
                .map_err(|e| OracleError::SchemaViolation(format!("NER response: {e}")))?;
            let names = v
                .get("entities")
                .and_then(Value::as_array)
                .ok_or_else(|| OracleError::SchemaViolation("NER response lacks \"entities\"".into()))?;
            keep.extend(names.iter().filter_map(Value::as_str).map(str::to_string));
        }
        // Only strings that were actually offered survive.
        Ok(candidates.iter().filter(|c| keep.contains(*c)).cloned().collect())
    }
}

impl Embedder for RemoteOracle {
    fn embed(&self, label: &str) -> Result<Vec<f64>, OracleError> {
        if label.trim().is_empty() {
            return Err(OracleError::InvalidInput("cannot embed an empty label".into()));
        }
        let resp = self.post(
            &self.embedding_endpoint,
            &json!({"model": self.embedding_model, "input": [label]}),
        )?;
        let mut v: Vec<f64> = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| OracleError::SchemaViolation("embedding response lacks data".into()))?
            .iter()
            .map(|x| x.as_f64().unwrap_or(0.0))
            .collect();
        l2_normalize(&mut v);
        Ok(v)
    }
}
