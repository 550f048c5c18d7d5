//! Recursive breadth-first elicitation.
//!
//! A FIFO frontier of `(entity, layer)` pairs is drained by one or more
//! workers. Each worker atomically claims the next entity, asks the oracle
//! for its facts, runs NER over the returned objects and commits the result:
//! triples are stored, discovery edges recorded and unseen entities enqueued
//! one layer deeper. Caps, a money budget and a layer bound can stop the
//! crawl early; the state can be checkpointed and resumed at any point.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::jsonl::{self, TripleRecord};
use crate::io::{write_atomic, FormatError};
use crate::model::{EntityId, Term, Triple};
use crate::oracle::{AuditLog, ElicitationResult, Elicitor, EntityRecognizer, Money, OracleError};

pub const CHECKPOINT_VERSION: u32 = 1;
/// Failed attempts tolerated before an entity is quarantined.
pub const MAX_ENTITY_RETRIES: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CrawlError {
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint was written for a different configuration ({found} != {expected})")]
    ConfigMismatch { expected: String, found: String },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlConfig {
    pub seed: EntityId,
    /// Stop after this many completed entities.
    pub max_entities: Option<usize>,
    /// Entities discovered deeper than this are not elicited.
    pub max_layers: Option<u32>,
    pub per_entity_cap: usize,
    pub budget: Option<Money>,
    pub workers: usize,
    /// Completed entities between checkpoints; 0 disables periodic writes.
    pub checkpoint_interval: usize,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            seed: EntityId::new("Vannevar Bush").expect("non-empty"),
            max_entities: None,
            max_layers: None,
            per_entity_cap: 500,
            budget: None,
            workers: 1,
            checkpoint_interval: 0,
        }
    }
}

impl CrawlConfig {
    pub fn new(seed: EntityId) -> Self {
        CrawlConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.workers == 0 {
            return Err(CrawlError::InvalidConfig("worker count must be at least 1".into()));
        }
        if self.per_entity_cap == 0 || self.max_entities == Some(0) {
            return Err(CrawlError::InvalidConfig("caps must be positive".into()));
        }
        Ok(())
    }

    /// Hash over the settings that determine the crawl's result. Worker
    /// count and checkpoint interval are excluded so a resume may change them.
    pub fn result_hash(&self) -> String {
        let key = serde_json::json!({
            "seed": self.seed,
            "max_entities": self.max_entities,
            "max_layers": self.max_layers,
            "per_entity_cap": self.per_entity_cap,
            "budget": self.budget,
        });
        Sha256::digest(key.to_string().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FrontierExhausted,
    EntityCap,
    Budget,
    /// A caller-imposed completion limit (see [`Crawler::run_until`]).
    Paused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationRecord {
    pub layer: u32,
    /// Pairs returned by the oracle.
    pub returned: usize,
    /// Pairs kept after the per-entity cap.
    pub kept: usize,
    pub cost: Money,
    /// The oracle answered with no usable pairs.
    pub empty: bool,
}

mod triple_set {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(set: &BTreeSet<Triple>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(set.iter().map(TripleRecord::from))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<Triple>, D::Error> {
        let records = Vec::<TripleRecord>::deserialize(d)?;
        records
            .into_iter()
            .map(|r| Triple::try_from(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrawlState {
    pub frontier: VecDeque<(EntityId, u32)>,
    pub visited: BTreeSet<EntityId>,
    pub records: BTreeMap<EntityId, ElicitationRecord>,
    #[serde(with = "triple_set")]
    pub triples: BTreeSet<Triple>,
    pub discovery_edges: BTreeSet<(EntityId, EntityId)>,
    /// Discovered beyond the layer bound; never elicited.
    pub overflow: BTreeSet<EntityId>,
    pub quarantined: BTreeSet<EntityId>,
    pub failures: BTreeMap<EntityId, u32>,
    pub spent: Money,
    /// Cost of calls whose results were discarded because committing them
    /// would have exceeded the budget.
    pub discarded_spend: Money,
    pub completed: usize,
    pub stop_reason: Option<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    pub per_entity_cap: usize,
    /// Stored triple count per elicited entity.
    pub triple_counts: BTreeMap<EntityId, usize>,
    /// Pairs dropped by the cap, per entity (only entities that hit it).
    pub dropped: BTreeMap<EntityId, usize>,
    pub total_dropped: usize,
    pub quarantined: Vec<EntityId>,
    pub empty_responses: Vec<EntityId>,
}

impl CrawlState {
    pub fn initial(seed: &EntityId) -> Self {
        CrawlState {
            frontier: VecDeque::from([(seed.clone(), 0)]),
            ..Self::default()
        }
    }

    /// Entities that must never be enqueued again.
    fn seen_set(&self) -> HashSet<EntityId> {
        self.visited
            .iter()
            .chain(self.frontier.iter().map(|(e, _)| e))
            .chain(&self.overflow)
            .chain(&self.quarantined)
            .cloned()
            .collect()
    }

    pub fn layer_of(&self, e: &EntityId) -> Option<u32> {
        self.records.get(e).map(|r| r.layer)
    }

    /// Commits one elicitation: caps the pairs, stores triples, records
    /// discovery edges and enqueues unseen entities at `layer + 1`.
    ///
    /// `named` is the NER verdict over the kept objects. Returns the newly
    /// enqueued entities.
    fn apply_elicitation(
        &mut self,
        seen: &mut HashSet<EntityId>,
        layer: u32,
        result: &ElicitationResult,
        named: &HashSet<String>,
        config: &CrawlConfig,
    ) -> Vec<(EntityId, u32)> {
        let entity = &result.subject;
        let kept = result.pairs.len().min(config.per_entity_cap);
        let mut discovered = Vec::new();
        for (p, o) in &result.pairs[..kept] {
            let object = if named.contains(o) {
                match EntityId::new(o) {
                    Ok(e) => Term::Entity(e),
                    Err(_) => continue,
                }
            } else {
                Term::Literal(o.clone())
            };
            let Ok(triple) = Triple::new(entity.clone(), p, object) else {
                continue;
            };
            if let Term::Entity(child) = &triple.object {
                self.discovery_edges.insert((entity.clone(), child.clone()));
                if seen.insert(child.clone()) {
                    let child_layer = layer + 1;
                    if config.max_layers.is_some_and(|m| child_layer > m) {
                        self.overflow.insert(child.clone());
                    } else {
                        self.frontier.push_back((child.clone(), child_layer));
                        discovered.push((child.clone(), child_layer));
                    }
                }
            }
            self.triples.insert(triple);
        }
        self.visited.insert(entity.clone());
        self.records.insert(
            entity.clone(),
            ElicitationRecord {
                layer,
                returned: result.pairs.len(),
                kept,
                cost: result.cost,
                empty: result.pairs.is_empty(),
            },
        );
        self.spent += result.cost;
        self.completed += 1;
        discovered
    }

    /// Re-enqueues a failed entity, or quarantines it after too many tries.
    fn record_failure(&mut self, entity: EntityId, layer: u32) {
        let n = self.failures.entry(entity.clone()).or_default();
        *n += 1;
        if *n > MAX_ENTITY_RETRIES {
            self.quarantined.insert(entity);
        } else {
            self.frontier.push_back((entity, layer));
        }
    }

    pub fn skew_report(&self, per_entity_cap: usize) -> SkewReport {
        let mut triple_counts: BTreeMap<EntityId, usize> =
            self.records.keys().map(|e| (e.clone(), 0)).collect();
        for t in &self.triples {
            *triple_counts.entry(t.subject.clone()).or_default() += 1;
        }
        let dropped: BTreeMap<EntityId, usize> = self
            .records
            .iter()
            .filter(|(_, r)| r.returned > r.kept)
            .map(|(e, r)| (e.clone(), r.returned - r.kept))
            .collect();
        SkewReport {
            per_entity_cap,
            total_dropped: dropped.values().sum(),
            triple_counts,
            dropped,
            quarantined: self.quarantined.iter().cloned().collect(),
            empty_responses: self
                .records
                .iter()
                .filter(|(_, r)| r.empty)
                .map(|(e, _)| e.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub state: CrawlState,
}

impl Checkpoint {
    pub fn new(config: &CrawlConfig, state: CrawlState) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config_hash: config.result_hash(),
            state,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CrawlError> {
        let bytes = serde_json::to_vec(self).map_err(|e| CrawlError::CorruptCheckpoint(e.to_string()))?;
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CrawlError> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| CrawlError::CorruptCheckpoint(e.to_string()))?;
        if cp.format_version != CHECKPOINT_VERSION {
            return Err(CrawlError::CorruptCheckpoint(format!(
                "unsupported format version {}",
                cp.format_version
            )));
        }
        Ok(cp)
    }

    pub fn read(path: &Path) -> Result<Self, CrawlError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CrawlError::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Returns the stored state if it was written under `config`.
    pub fn resume(self, config: &CrawlConfig) -> Result<CrawlState, CrawlError> {
        let expected = config.result_hash();
        if self.config_hash != expected {
            return Err(CrawlError::ConfigMismatch {
                expected,
                found: self.config_hash,
            });
        }
        Ok(self.state)
    }
}

struct Shared {
    state: CrawlState,
    seen: HashSet<EntityId>,
    in_flight: Vec<(EntityId, u32)>,
    halted: bool,
    since_checkpoint: usize,
    run_completions: usize,
    error: Option<CrawlError>,
}

pub struct Crawler<'a> {
    config: CrawlConfig,
    elicitor: &'a dyn Elicitor,
    ner: &'a dyn EntityRecognizer,
    audit: Option<&'a AuditLog>,
    checkpoint_path: Option<PathBuf>,
}

impl<'a> Crawler<'a> {
    pub fn new(config: CrawlConfig, elicitor: &'a dyn Elicitor, ner: &'a dyn EntityRecognizer) -> Self {
        Crawler {
            config,
            elicitor,
            ner,
            audit: None,
            checkpoint_path: None,
        }
    }

    pub fn with_audit(mut self, audit: &'a AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    /// Periodic checkpoints go here (see `checkpoint_interval`).
    pub fn with_checkpoint_path(mut self, path: &Path) -> Self {
        self.checkpoint_path = Some(path.to_path_buf());
        self
    }

    pub fn config(&self) -> &CrawlConfig {
        &self.config
    }

    /// Crawls from the seed until a bound fires or the frontier empties.
    pub fn run(&self) -> Result<CrawlState, CrawlError> {
        self.run_from(CrawlState::initial(&self.config.seed), None)
    }

    pub fn resume(&self, checkpoint: Checkpoint) -> Result<CrawlState, CrawlError> {
        self.run_from(checkpoint.resume(&self.config)?, None)
    }

    /// Like [`run`](Self::run) but pauses after `completions` entities.
    pub fn run_until(&self, completions: usize) -> Result<CrawlState, CrawlError> {
        self.run_from(CrawlState::initial(&self.config.seed), Some(completions))
    }

    pub fn run_from(&self, mut state: CrawlState, pause_after: Option<usize>) -> Result<CrawlState, CrawlError> {
        self.config.validate()?;
        state.stop_reason = None;
        let seen = state.seen_set();
        let shared = Mutex::new(Shared {
            state,
            seen,
            in_flight: Vec::new(),
            halted: false,
            since_checkpoint: 0,
            run_completions: 0,
            error: None,
        });
        let wake = Condvar::new();
        std::thread::scope(|scope| {
            for _ in 0..self.config.workers {
                scope.spawn(|| self.worker(&shared, &wake, pause_after));
            }
        });
        let mut shared = shared.into_inner().unwrap();
        if let Some(e) = shared.error.take() {
            return Err(e);
        }
        if shared.state.stop_reason.is_none() {
            shared.state.stop_reason = Some(StopReason::FrontierExhausted);
        }
        if let Some(audit) = self.audit {
            let _ = audit.flush();
        }
        if let Some(path) = &self.checkpoint_path {
            Checkpoint::new(&self.config, shared.state.clone()).write(path)?;
        }
        Ok(shared.state)
    }

    fn claim(&self, sh: &mut Shared, pause_after: Option<usize>) -> Option<(EntityId, u32)> {
        let started = sh.state.completed + sh.in_flight.len();
        if self.config.max_entities.is_some_and(|m| started >= m) {
            if sh.in_flight.is_empty() {
                sh.state.stop_reason = Some(StopReason::EntityCap);
            }
            return None;
        }
        if pause_after.is_some_and(|n| sh.run_completions + sh.in_flight.len() >= n) {
            if sh.in_flight.is_empty() && !sh.state.frontier.is_empty() {
                sh.state.stop_reason = Some(StopReason::Paused);
            }
            return None;
        }
        if self.config.budget.is_some_and(|b| sh.state.spent >= b) {
            sh.state.stop_reason = Some(StopReason::Budget);
            return None;
        }
        let item = sh.state.frontier.pop_front()?;
        sh.in_flight.push(item.clone());
        Some(item)
    }

    fn worker(&self, shared: &Mutex<Shared>, wake: &Condvar, pause_after: Option<usize>) {
        loop {
            let (entity, layer) = {
                let mut sh = shared.lock().unwrap();
                loop {
                    if sh.halted {
                        return;
                    }
                    if let Some(item) = self.claim(&mut sh, pause_after) {
                        break item;
                    }
                    if sh.in_flight.is_empty() {
                        sh.halted = true;
                        wake.notify_all();
                        return;
                    }
                    sh = wake.wait(sh).unwrap();
                }
            };

            let outcome = self.elicit(&entity);

            let mut sh = shared.lock().unwrap();
            sh.in_flight.retain(|(e, _)| *e != entity);
            match outcome {
                Ok((result, named)) => self.commit(&mut sh, layer, result, named),
                Err(e) => {
                    tracing::warn!("elicitation of {entity} failed: {e}");
                    sh.state.record_failure(entity, layer);
                }
            }
            wake.notify_all();
        }
    }

    fn elicit(&self, entity: &EntityId) -> Result<(ElicitationResult, HashSet<String>), OracleError> {
        let result = self.elicitor.elicit(entity)?;
        if let Some(audit) = self.audit {
            audit.record(entity, result.usage, result.pairs.len());
        }
        let kept = result.pairs.len().min(self.config.per_entity_cap);
        let mut candidates: Vec<String> = result.pairs[..kept].iter().map(|(_, o)| o.clone()).collect();
        candidates.sort();
        candidates.dedup();
        let named = if candidates.is_empty() {
            HashSet::new()
        } else {
            self.ner.named_entities(&candidates)?.into_iter().collect()
        };
        Ok((result, named))
    }

    fn commit(&self, sh: &mut Shared, layer: u32, result: ElicitationResult, named: HashSet<String>) {
        if self
            .config
            .budget
            .is_some_and(|b| sh.state.spent + result.cost > b)
        {
            // Keep the entity at the head of the queue so a resumed crawl
            // with a larger budget picks it up first.
            sh.state.discarded_spend += result.cost;
            sh.state.frontier.push_front((result.subject, layer));
            sh.state.stop_reason = Some(StopReason::Budget);
            sh.halted = true;
            return;
        }
        let Shared { state, seen, .. } = sh;
        state.apply_elicitation(seen, layer, &result, &named, &self.config);
        sh.run_completions += 1;
        sh.since_checkpoint += 1;
        if self.config.checkpoint_interval > 0 && sh.since_checkpoint >= self.config.checkpoint_interval {
            sh.since_checkpoint = 0;
            if let Some(path) = &self.checkpoint_path {
                let mut snapshot = sh.state.clone();
                for item in sh.in_flight.iter().rev() {
                    snapshot.frontier.push_front(item.clone());
                }
                if let Err(e) = Checkpoint::new(&self.config, snapshot).write(path) {
                    sh.error = Some(e);
                    sh.halted = true;
                }
            }
        }
    }

    /// Elicits a single entity outside a crawl and commits it into `state`.
    pub fn process_entity(
        &self,
        state: &mut CrawlState,
        entity: &EntityId,
        layer: u32,
    ) -> Result<Vec<(EntityId, u32)>, OracleError> {
        let (result, named) = self.elicit(entity)?;
        state.frontier.retain(|(e, _)| e != entity);
        let mut seen = state.seen_set();
        seen.insert(entity.clone());
        Ok(state.apply_elicitation(&mut seen, layer, &result, &named, &self.config))
    }
}

/// Output file locations for a finished or paused crawl.
#[derive(Debug, Clone)]
pub struct CrawlOutputs {
    pub triples: PathBuf,
    pub edges: PathBuf,
    pub skew: PathBuf,
    pub checkpoint: PathBuf,
}

impl CrawlOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        CrawlOutputs {
            triples: dir.join("triples.jsonl"),
            edges: dir.join("edges.jsonl"),
            skew: dir.join("skew.json"),
            checkpoint: dir.join("checkpoint.json"),
        }
    }

    pub fn write(&self, config: &CrawlConfig, state: &CrawlState) -> Result<(), CrawlError> {
        write_atomic(&self.triples, jsonl::write_triples(&state.triples).as_bytes())?;
        write_atomic(&self.edges, jsonl::write_edges(&state.discovery_edges).as_bytes())?;
        let skew = serde_json::to_vec_pretty(&state.skew_report(config.per_entity_cap))
            .expect("report serializes");
        write_atomic(&self.skew, &skew)?;
        Checkpoint::new(config, state.clone()).write(&self.checkpoint)
    }
}
