use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kbforge::analytics::{compute_stats, run_canned_analyses};
use kbforge::compare::{default_entities, parse_entity_list, run_compare, CompareSettings, ComparedModel, Verifier};
use kbforge::consolidate::{consolidate, ConsolidationReport, DEFAULT_THRESHOLD};
use kbforge::crawl::{Checkpoint, CrawlOutputs, Crawler};
use kbforge::io::{jsonl, load_store, read_triples, write_atomic, write_triples};
use kbforge::jobs::{CrawlJob, ModelsJob};
use kbforge::meta::{compute_bfs_meta, edges_from_triples, materialize_meta, overlay_from_triples};
use kbforge::oracle::local::TrigramEmbedder;
use kbforge::oracle::AuditLog;
use kbforge::query::{evaluate, explain, parse_query, EvalOptions};
use kbforge::service::{serve, ServiceConfig};
use kbforge::verify::{corpus_from_triples, CorpusBackend, RuleJudge};
use kbforge::{EntityId, Namespaces};

#[derive(Parser)]
#[command(name = "kbforge", version, about = "Build, query and serve recursively elicited knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl from a seed entity as described by a TOML job file.
    Crawl {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Merge near-duplicate relation and class labels.
    Consolidate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute bfsLayer / bfsParent meta-triples.
    Bfsmeta {
        #[arg(long)]
        triples: PathBuf,
        /// Discovery edges from the crawl; entity-valued triples otherwise.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long)]
        seed: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the input triples merged with the meta-triples.
        #[arg(long)]
        merged: Option<PathBuf>,
    },
    /// Run a query against a store.
    Query {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, conflicts_with = "query")]
        file: Option<PathBuf>,
        #[arg(long)]
        query: Option<String>,
        /// Seconds.
        #[arg(long, default_value_t = 100)]
        timeout: u64,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        explain: bool,
    },
    /// Summary statistics.
    Stats {
        #[arg(long)]
        store: PathBuf,
        /// Labels to measure overlap against, one per line.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Consolidation report, for before/after counts.
        #[arg(long)]
        consolidation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the five canned analysis queries.
    Analyses {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        timeout: u64,
    },
    /// Elicit, verify and align several models on a fixed entity list.
    Compare {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let ns = Namespaces::default();
    match Cli::parse().command {
        Command::Crawl { config, resume } => crawl(&config, resume.as_deref()),
        Command::Consolidate {
            input,
            out,
            threshold,
            report,
        } => {
            let triples = read_triples(&input, &ns)?;
            let (rewritten, rep) = consolidate(&triples, threshold, &TrigramEmbedder)?;
            write_triples(&out, &rewritten, &ns)?;
            println!(
                "relations {} -> {}, classes {} -> {}, {} duplicates removed",
                rep.relations_before, rep.relations_after, rep.classes_before, rep.classes_after, rep.duplicates_removed
            );
            if let Some(path) = report {
                write_json(&path, &rep)?;
            }
            Ok(())
        }
        Command::Bfsmeta {
            triples,
            edges,
            seed,
            out,
            merged,
        } => {
            let ts = read_triples(&triples, &ns)?;
            let edges = match edges {
                Some(p) => jsonl::parse_edges(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?
                    .into_iter()
                    .collect(),
                None => edges_from_triples(&ts),
            };
            let overlay = compute_bfs_meta(&edges, &EntityId::new(&seed)?)?;
            let meta = materialize_meta(&overlay);
            write_triples(&out, &meta, &ns)?;
            if let Some(path) = merged {
                let all: Vec<_> = ts.iter().filter(|t| !t.is_meta()).chain(&meta).cloned().collect();
                write_triples(&path, &all, &ns)?;
            }
            println!("{} entities annotated, {} unreachable", overlay.layers.len(), overlay.unreachable.len());
            Ok(())
        }
        Command::Query {
            store,
            file,
            query,
            timeout,
            json,
            explain: show_plan,
        } => {
            let text = match (file, query) {
                (Some(f), _) => std::fs::read_to_string(&f).with_context(|| f.display().to_string())?,
                (None, Some(q)) => q,
                (None, None) => bail!("pass --file or --query"),
            };
            let store = load_store(&store, &ns)?;
            let plan = parse_query(&text)?;
            if show_plan {
                print!("{}", explain(&plan, &store, &ns));
                return Ok(());
            }
            let opts = EvalOptions::default().with_timeout(Duration::from_secs(timeout));
            let table = evaluate(&plan, &store, &opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table.to_sparql_json(&ns))?);
            } else {
                print!("{}", table.to_text());
                eprintln!("{} rows", table.len());
            }
            Ok(())
        }
        Command::Stats {
            store,
            reference,
            consolidation,
            out,
        } => {
            let store = load_store(&store, &ns)?;
            let meta_triples: Vec<_> = store.iter().filter(|t| t.is_meta()).collect();
            let overlay = (!meta_triples.is_empty()).then(|| overlay_from_triples(&meta_triples));
            let refs = match reference {
                Some(p) => Some(read_lines(&p)?),
                None => None,
            };
            let canon: Option<ConsolidationReport> = match consolidation {
                Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(&p)?)?),
                None => None,
            };
            let stats = compute_stats(&store, overlay.as_ref(), canon.as_ref(), refs.as_deref());
            emit_json(out.as_deref(), &stats)
        }
        Command::Analyses { store, out, timeout } => {
            let store = load_store(&store, &ns)?;
            let report = run_canned_analyses(&store, &EvalOptions::default().with_timeout(Duration::from_secs(timeout)));
            print!("{}", report.to_text());
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Compare { models, entities, out } => compare(&models, entities.as_deref(), &out),
        Command::Serve { config, store, bind } => {
            let mut cfg = match config {
                Some(p) => ServiceConfig::load(&p)?,
                None => ServiceConfig::default(),
            };
            cfg.apply_env(|k| std::env::var(k).ok())?;
            if let Some(s) = store {
                cfg.store = s;
            }
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve(cfg))?;
            Ok(())
        }
    }
}

fn crawl(config: &Path, resume: Option<&Path>) -> Result<()> {
    let job = CrawlJob::load(config)?;
    let cfg = job.crawl_config()?;
    let oracle = job.build_oracle()?;
    let out_dir = job.out_dir();
    std::fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
    let outputs = CrawlOutputs::in_dir(&out_dir);
    let audit = match &job.audit_log {
        Some(p) => AuditLog::to_file(&job.base.join(p))?,
        None => AuditLog::in_memory(),
    };
    let crawler = Crawler::new(cfg.clone(), oracle.elicitor(), oracle.recognizer())
        .with_audit(&audit)
        .with_checkpoint_path(&outputs.checkpoint);
    let state = match resume {
        Some(cp) => crawler.resume(Checkpoint::read(cp)?)?,
        None => crawler.run()?,
    };
    audit.flush()?;
    outputs.write(&cfg, &state)?;
    println!(
        "{} entities, {} triples, spent {}, stopped: {:?}",
        state.completed,
        state.triples.len(),
        state.spent,
        state.stop_reason
    );
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn compare(models: &Path, entities: Option<&Path>, out: &Path) -> Result<()> {
    let job = ModelsJob::load(models)?;
    let template = job.template()?;
    let world = job.world()?;
    let built = job
        .models
        .iter()
        .map(|m| m.oracle.build(&m.name, &template, world.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let compared: Vec<ComparedModel> = job
        .models
        .iter()
        .zip(&built)
        .map(|(m, b)| ComparedModel {
            name: m.name.clone(),
            prompt_hash: template.hash(),
            oracle: b.elicitor(),
        })
        .collect();
    let entities = match entities {
        Some(p) => parse_entity_list(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
        None => default_entities(),
    };
    let corpus = match (job.corpus_dir(), &world) {
        (Some(dir), _) => CorpusBackend::from_dir(&dir)?,
        (None, Some(w)) => corpus_from_triples(&w.triples()),
        (None, None) => bail!("set [verify] corpus_dir or describe a [world]"),
    };
    let verifier = Verifier {
        backend: &corpus,
        judge: &RuleJudge,
        k: job.verify.k,
    };
    let settings = CompareSettings {
        cap: job.cap,
        workers: job.workers,
        ner: built.first().map(|b| b.recognizer()),
        ..CompareSettings::default()
    };
    let run = run_compare(&compared, &entities, &verifier, &settings)?;
    run.write(out)?;
    for (model, t) in &run.totals {
        println!("{model}: {} triples, {} true, {} plausible, {} false", t.triples, t.true_, t.plausible, t.false_);
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())?;
    Ok(())
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}
