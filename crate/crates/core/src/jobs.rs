//! TOML job files for crawls and model comparisons, and the oracles they
//! describe.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::crawl::CrawlConfig;
use crate::io::jsonl;
use crate::model::EntityId;
use crate::oracle::remote::RemoteOracle;
use crate::oracle::synthetic::{SyntheticOracle, SyntheticWorld, WorldParams};
use crate::oracle::{Elicitor, EntityRecognizer, Money, OracleConfig, PromptTemplate};

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid job: {0}")]
    Invalid(String),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a synthetic oracle's ground truth comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    /// JSON-lines triples; generated from `seed`/`entities` when absent.
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_world_size")]
    pub entities: usize,
}

fn default_world_size() -> usize {
    500
}

impl WorldSpec {
    pub fn build(&self, base: &Path) -> Result<SyntheticWorld, JobError> {
        match &self.file {
            Some(f) => {
                let path = base.join(f);
                let text = std::fs::read_to_string(&path)?;
                let edges = jsonl::parse_triples(&text).map_err(|e| JobError::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                Ok(SyntheticWorld::from_triples(Vec::new(), edges))
            }
            None => Ok(SyntheticWorld::generate(WorldParams::new(self.seed, self.entities))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleSpec {
    /// Chat-completions endpoint; see [`OracleConfig`].
    Remote {
        #[serde(flatten)]
        config: OracleConfig,
    },
    /// Deterministic oracle over a synthetic world.
    Synthetic {
        #[serde(default)]
        hallucination: f64,
        #[serde(default)]
        hallucination_seed: u64,
    },
}

/// A built oracle, usable both for elicitation and for entity recognition.
pub enum BuiltOracle {
    Remote(Box<RemoteOracle>),
    Synthetic(SyntheticOracle),
}

impl BuiltOracle {
    pub fn elicitor(&self) -> &dyn Elicitor {
        match self {
            BuiltOracle::Remote(o) => o.as_ref(),
            BuiltOracle::Synthetic(o) => o,
        }
    }

    pub fn recognizer(&self) -> &dyn EntityRecognizer {
        match self {
            BuiltOracle::Remote(o) => o.as_ref(),
            BuiltOracle::Synthetic(o) => o,
        }
    }
}

impl OracleSpec {
    pub fn build(
        &self,
        name: &str,
        template: &PromptTemplate,
        world: Option<&Arc<SyntheticWorld>>,
    ) -> Result<BuiltOracle, JobError> {
        match self {
            OracleSpec::Remote { config } => Ok(BuiltOracle::Remote(Box::new(RemoteOracle::new(config.clone(), template.clone())?))),
            OracleSpec::Synthetic {
                hallucination,
                hallucination_seed,
            } => {
                let world = world.ok_or_else(|| JobError::Invalid("a synthetic oracle needs a [world] section".into()))?;
                Ok(BuiltOracle::Synthetic(
                    SyntheticOracle::new(world.clone())
                        .named(name)
                        .with_hallucination(*hallucination, *hallucination_seed),
                ))
            }
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, JobError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| JobError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_template(base: &Path, prompt: Option<&PathBuf>) -> Result<PromptTemplate, JobError> {
    Ok(match prompt {
        Some(p) => PromptTemplate::load(&base.join(p))?,
        None => PromptTemplate::default(),
    })
}

/// A crawl job file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrawlJob {
    pub seed: String,
    pub max_entities: Option<usize>,
    pub max_layers: Option<u32>,
    #[serde(default = "default_cap")]
    pub per_entity_cap: usize,
    /// Spending limit in currency units.
    pub budget: Option<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub checkpoint_interval: usize,
    /// Output directory, relative to the job file.
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub audit_log: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub oracle: OracleSpec,
    pub world: Option<WorldSpec>,
    #[serde(skip)]
    pub base: PathBuf,
}

fn default_cap() -> usize {
    500
}

fn default_workers() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl CrawlJob {
    pub fn from_toml(text: &str) -> Result<Self, JobError> {
        toml::from_str(text).map_err(|e| JobError::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, JobError> {
        let mut job: CrawlJob = read_toml(path)?;
        job.base = base_dir(path);
        Ok(job)
    }

    pub fn crawl_config(&self) -> Result<CrawlConfig, JobError> {
        let seed = EntityId::new(&self.seed).map_err(|e| JobError::Invalid(e.to_string()))?;
        Ok(CrawlConfig {
            seed,
            max_entities: self.max_entities,
            max_layers: self.max_layers,
            per_entity_cap: self.per_entity_cap,
            budget: self.budget.map(Money::from_units),
            workers: self.workers,
            checkpoint_interval: self.checkpoint_interval,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.base.join(&self.out_dir)
    }

    pub fn build_oracle(&self) -> Result<BuiltOracle, JobError> {
        let template = load_template(&self.base, self.prompt.as_ref())?;
        let world = self.world.as_ref().map(|w| w.build(&self.base)).transpose()?.map(Arc::new);
        self.oracle.build("synthetic", &template, world.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    #[serde(flatten)]
    pub oracle: OracleSpec,
}

/// Verification settings for a compare job.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// One document per file. When absent, a corpus is written from the
    /// synthetic world's ground truth.
    pub corpus_dir: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    crate::verify::DEFAULT_TOP_K
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            corpus_dir: None,
            k: default_k(),
        }
    }
}

/// A compare job file: several models, one shared prompt.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsJob {
    pub prompt: Option<PathBuf>,
    #[serde(default = "default_compare_cap")]
    pub cap: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub models: Vec<ModelEntry>,
    pub world: Option<WorldSpec>,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(skip)]
    pub base: PathBuf,
}

fn default_compare_cap() -> usize {
    crate::compare::DEFAULT_COMPARE_CAP
}

impl ModelsJob {
    pub fn load(path: &Path) -> Result<Self, JobError> {
        let mut job: ModelsJob = read_toml(path)?;
        job.base = base_dir(path);
        Ok(job)
    }

    pub fn template(&self) -> Result<PromptTemplate, JobError> {
        load_template(&self.base, self.prompt.as_ref())
    }

    pub fn world(&self) -> Result<Option<Arc<SyntheticWorld>>, JobError> {
        Ok(self.world.as_ref().map(|w| w.build(&self.base)).transpose()?.map(Arc::new))
    }

    pub fn corpus_dir(&self) -> Option<PathBuf> {
        self.verify.corpus_dir.as_ref().map(|d| self.base.join(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crawl_job_parses_and_converts() {
        let job = CrawlJob::from_toml(
            r#"
            seed = "Vannevar Bush"
            max_entities = 50
            budget = 1.5
            workers = 4
            [oracle]
            kind = "synthetic"
            hallucination = 0.1
            [world]
            seed = 7
            entities = 40
            "#,
        )
        .unwrap();
        let c = job.crawl_config().unwrap();
        assert_eq!(c.budget, Some(Money(1_500_000_000)));
        assert_eq!((c.workers, c.per_entity_cap), (4, 500));
        assert!(matches!(job.build_oracle().unwrap(), BuiltOracle::Synthetic(_)));
    }

    #[test]
    fn remote_oracle_fields_flatten() {
        let job = CrawlJob::from_toml(
            r#"
            seed = "X"
            [oracle]
            kind = "remote"
            model = "some-model"
            timeout_secs = 5
            "#,
        )
        .unwrap();
        match &job.oracle {
            OracleSpec::Remote { config } => {
                assert_eq!(config.model, "some-model");
                assert_eq!(config.timeout_secs, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_without_world_is_rejected() {
        let job = CrawlJob::from_toml("seed = \"X\"\n[oracle]\nkind = \"synthetic\"\n").unwrap();
        assert!(matches!(job.build_oracle(), Err(JobError::Invalid(_))));
        assert!(CrawlJob::from_toml("seed = \"X\"\nbogus = 1\n[oracle]\nkind = \"synthetic\"\n").is_err());
    }

    #[test]
    fn models_job_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(
            &path,
            r#"
            cap = 100
            [world]
            entities = 20
            [[models]]
            name = "a"
            kind = "synthetic"
            [[models]]
            name = "b"
            kind = "synthetic"
            hallucination = 0.3
            "#,
        )
        .unwrap();
        let job = ModelsJob::load(&path).unwrap();
        assert_eq!(job.models.len(), 2);
        assert_eq!(job.verify.k, crate::verify::DEFAULT_TOP_K);
        assert_eq!(job.world().unwrap().unwrap().entities.len(), 20);
    }
}
