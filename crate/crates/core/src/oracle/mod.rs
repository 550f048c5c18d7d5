//! Interfaces to the external knowledge services: triple elicitation,
//! named-entity recognition and label embedding.
//!
//! Every interface has a remote HTTP implementation ([`remote`]) and a
//! deterministic local one ([`local`], [`synthetic`]) used by tests and
//! offline runs.

pub mod local;
pub mod remote;
pub mod synthetic;

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{normalize_label, EntityId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle unreachable: {0}")]
    Unreachable(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Money in nano-currency units. Integer so that accumulated cost is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub u64);

impl Money {
    pub const ZERO: Money = Money(0);
    pub const NANOS_PER_UNIT: u64 = 1_000_000_000;

    pub fn from_units(units: f64) -> Money {
        Money((units * Self::NANOS_PER_UNIT as f64).round() as u64)
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_UNIT as f64
    }

    pub fn saturating_add(self, other: Money) -> Money {
        Money(self.0.saturating_add(other.0))
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / Self::NANOS_PER_UNIT, self.0 % Self::NANOS_PER_UNIT)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.prompt += other.prompt;
        self.completion += other.completion;
    }
}

/// Per-token prices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub prompt: Money,
    pub completion: Money,
}

impl UnitCosts {
    /// Prices given in currency per million tokens, as providers quote them.
    pub fn per_million(prompt: f64, completion: f64) -> Self {
        UnitCosts {
            prompt: Money((prompt * 1000.0).round() as u64),
            completion: Money((completion * 1000.0).round() as u64),
        }
    }

    pub fn cost(&self, usage: TokenUsage) -> Money {
        Money(usage.prompt * self.prompt.0 + usage.completion * self.completion.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// A malformed response is retried, then rejected.
    #[default]
    Strict,
    /// Malformed rows are dropped and valid rows kept.
    Repair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub validation: ValidationMode,
    /// Currency per million prompt / completion tokens.
    pub prompt_price_per_million: f64,
    pub completion_price_per_million: f64,
    /// Token-bucket rate; `None` disables limiting.
    pub requests_per_second: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4.1".into(),
            api_key_env: "KBFORGE_ORACLE_API_KEY".into(),
            timeout_secs: 120,
            max_retries: 3,
            validation: ValidationMode::Strict,
            prompt_price_per_million: 2.0,
            completion_price_per_million: 8.0,
            requests_per_second: None,
        }
    }
}

impl OracleConfig {
    /// Defaults overridden by `KBFORGE_ORACLE_ENDPOINT` / `KBFORGE_ORACLE_MODEL`.
    pub fn from_env() -> Self {
        let mut c = OracleConfig::default();
        if let Ok(v) = std::env::var("KBFORGE_ORACLE_ENDPOINT") {
            c.endpoint = v;
        }
        if let Ok(v) = std::env::var("KBFORGE_ORACLE_MODEL") {
            c.model = v;
        }
        c
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.timeout_secs == 0 {
            return Err(OracleError::InvalidInput("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn unit_costs(&self) -> UnitCosts {
        UnitCosts::per_million(self.prompt_price_per_million, self.completion_price_per_million)
    }
}

/// Output of one elicitation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationResult {
    pub subject: EntityId,
    /// (predicate, object) pairs in oracle response order, normalized.
    pub pairs: Vec<(String, String)>,
    pub raw_response: String,
    pub usage: TokenUsage,
    /// Cost of this call, including any retries.
    pub cost: Money,
}

impl ElicitationResult {
    /// The oracle answered but produced nothing usable.
    pub fn is_empty_response(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Normalizes raw pairs, dropping any whose predicate or object is blank.
pub fn normalize_pairs<I, P, O>(raw: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (P, O)>,
    P: AsRef<str>,
    O: AsRef<str>,
{
    raw.into_iter()
        .filter_map(|(p, o)| Some((normalize_label(p.as_ref()).ok()?, normalize_label(o.as_ref()).ok()?)))
        .collect()
}

pub trait Elicitor: Send + Sync {
    fn elicit(&self, entity: &EntityId) -> Result<ElicitationResult, OracleError>;

    /// Identifies the model behind this elicitor.
    fn model_name(&self) -> String;
}

pub trait EntityRecognizer: Send + Sync {
    /// Returns the subset of `candidates` judged to be named entities, in
    /// input order.
    fn named_entities(&self, candidates: &[String]) -> Result<Vec<String>, OracleError>;
}

pub trait Embedder: Send + Sync {
    /// Unit-norm embedding of a normalized label.
    fn embed(&self, label: &str) -> Result<Vec<f64>, OracleError>;
}

/// 64-bit FNV-1a over `(seed, label, index)` with a SplitMix64 finalizer.
/// Used wherever a deterministic per-item coin flip is needed.
pub fn fnv_mix(seed: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(label.bytes())
        .chain(index.to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Prompt text kept outside the code so every model can be held to the same
/// prompt. `{entity}` is replaced with the subject label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        toml::from_str(include_str!("../../prompts/elicit.toml")).expect("bundled template parses")
    }
}

impl PromptTemplate {
    pub fn ner() -> Self {
        toml::from_str(include_str!("../../prompts/ner.toml")).expect("bundled template parses")
    }

    pub fn judge() -> Self {
        toml::from_str(include_str!("../../prompts/judge.toml")).expect("bundled template parses")
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::InvalidInput(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| OracleError::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn render(&self, entity: &EntityId) -> String {
        self.user.replace("{entity}", entity.label())
    }

    /// Hex SHA-256 over both template parts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0u8]);
        h.update(self.user.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Blocking token bucket.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(requests_per_second: f64) -> Self {
        let capacity = requests_per_second.max(1.0);
        TokenBucket {
            rate: requests_per_second,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.rate;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub entity: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub pairs: usize,
}

/// Append-only JSON-lines log with one record per oracle call.
#[derive(Debug, Default)]
pub struct AuditLog {
    file: Mutex<Option<BufWriter<File>>>,
    memory: Mutex<Vec<AuditRecord>>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            file: Mutex::new(Some(BufWriter::new(f))),
            memory: Mutex::new(Vec::new()),
        })
    }

    pub fn record(&self, entity: &EntityId, usage: TokenUsage, pairs: usize) {
        let rec = AuditRecord {
            entity: entity.label().to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            prompt_tokens: usage.prompt,
            completion_tokens: usage.completion,
            pairs,
        };
        if let Some(w) = self.file.lock().unwrap().as_mut() {
            if let Err(e) = serde_json::to_writer(&mut *w, &rec).map_err(std::io::Error::from).and_then(|_| w.write_all(b"\n")) {
                tracing::warn!("audit log write failed: {e}");
            }
        }
        self.memory.lock().unwrap().push(rec);
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.memory.lock().unwrap().clone()
    }

    pub fn flush(&self) -> std::io::Result<()> {
        match self.file.lock().unwrap().as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }
}
