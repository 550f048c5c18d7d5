//! Precision estimation: sample triples, retrieve documents for each, let a
//! judge label it, and aggregate label fractions.

mod judge;
mod manual;
mod search;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use judge::{Judge, Judgement, RemoteJudge, RuleJudge};
pub use manual::{read_manual_csv, write_manual_csv};
pub use search::{CorpusBackend, Document, SearchBackend, WebSearchBackend};

use crate::model::Triple;
use crate::oracle::TokenBucket;
use crate::store::TripleStore;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("cannot sample {requested} triples from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("no verdicts to aggregate")]
    EmptyInput,
    #[error("verdicts mix triple-precision and subject-precision labels")]
    MixedModes,
    #[error("search backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("judge failed: {0}")]
    Judge(String),
    #[error("manual assessment file: {0}")]
    Manual(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What is being verified: the whole statement or only the subject's
/// existence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Triple,
    Subject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    True,
    Plausible,
    False,
    Verifiable,
    Unverifiable,
}

impl Label {
    /// Labels reported for `mode`, in display order.
    pub fn all(mode: Mode) -> [Label; 3] {
        match mode {
            Mode::Triple => [Label::True, Label::Plausible, Label::False],
            Mode::Subject => [Label::Verifiable, Label::Plausible, Label::Unverifiable],
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "true" => Label::True,
            "plausible" => Label::Plausible,
            "false" => Label::False,
            "verifiable" => Label::Verifiable,
            "unverifiable" => Label::Unverifiable,
            _ => return None,
        })
    }

    fn fits(self, mode: Mode) -> bool {
        Label::all(mode).contains(&self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub document: String,
    pub snippet: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeKind {
    Automated,
    ManualImport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub triple: Triple,
    pub mode: Mode,
    pub label: Label,
    pub evidence: Vec<Evidence>,
    pub judge: JudgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub mode: Mode,
    pub sample_size: usize,
    pub counts: BTreeMap<Label, usize>,
    pub fractions: BTreeMap<Label, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Triples whose verification was deferred and not counted.
    #[serde(default)]
    pub deferred: usize,
}

impl PrecisionReport {
    pub fn fraction(&self, label: Label) -> f64 {
        self.fractions.get(&label).copied().unwrap_or(0.0)
    }
}

/// Verdicts of one batch plus the triples that could not be verified.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationBatch {
    pub verdicts: Vec<Verdict>,
    pub deferred: Vec<Triple>,
}

/// Uniform sample without replacement. The store's triples are taken in
/// sorted order first, so the sample depends only on the triple set and
/// the seed.
pub fn sample_triples(store: &TripleStore, n: usize, seed: u64, exclude_meta: bool) -> Result<Vec<Triple>, VerifyError> {
    let mut all: Vec<Triple> = store.iter().filter(|t| !(exclude_meta && t.is_meta())).collect();
    if n > all.len() {
        return Err(VerifyError::SampleTooLarge {
            requested: n,
            available: all.len(),
        });
    }
    all.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, all.len(), n)
        .into_iter()
        .map(|i| all[i].clone())
        .collect())
}

/// Splits a camelCase predicate into lowercase words: `operatesIn` ->
/// `operates in`.
pub fn surface_form(predicate: &str) -> String {
    let mut out = String::with_capacity(predicate.len() + 4);
    let mut prev_lower = false;
    for c in predicate.chars() {
        if c.is_uppercase() && prev_lower {
            out.push(' ');
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        out.extend(c.to_lowercase());
    }
    out
}

/// The statement as plain text, e.g. `Suzhou Metro operates in Suzhou`.
pub fn statement_text(t: &Triple) -> String {
    format!("{} {} {}", t.subject.label(), surface_form(&t.predicate), t.object.text())
}

fn search_query(t: &Triple, mode: Mode) -> String {
    match mode {
        Mode::Triple => statement_text(t),
        Mode::Subject => t.subject.label().to_string(),
    }
}

/// Retrieves the top `k` documents for `triple` and asks the judge.
pub fn verify_triple(
    triple: &Triple,
    mode: Mode,
    backend: &dyn SearchBackend,
    judge: &dyn Judge,
    k: usize,
) -> Result<Verdict, VerifyError> {
    let docs = backend.search(&search_query(triple, mode), k)?;
    let Judgement { label, evidence } = judge.judge(triple, mode, &docs)?;
    if !label.fits(mode) {
        return Err(VerifyError::Judge(format!("label {label:?} is not a {mode:?} label")));
    }
    Ok(Verdict {
        triple: triple.clone(),
        mode,
        label,
        evidence,
        judge: JudgeKind::Automated,
        annotator: None,
    })
}

/// Verifies `triples` on `workers` threads, preserving input order.
/// Backend outages defer a triple instead of failing the batch.
pub fn verify_batch(
    triples: &[Triple],
    mode: Mode,
    backend: &dyn SearchBackend,
    judge: &dyn Judge,
    k: usize,
    workers: usize,
    limiter: Option<&TokenBucket>,
) -> Result<VerificationBatch, VerifyError> {
    let workers = workers.max(1);
    let chunk = triples.len().div_ceil(workers).max(1);
    let results: Vec<Vec<Result<Verdict, VerifyError>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = triples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|t| {
                            if let Some(l) = limiter {
                                l.acquire();
                            }
                            verify_triple(t, mode, backend, judge, k)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("verifier thread panicked")).collect()
    });
    let mut batch = VerificationBatch::default();
    for (t, r) in triples.iter().zip(results.into_iter().flatten()) {
        match r {
            Ok(v) => batch.verdicts.push(v),
            Err(VerifyError::BackendUnreachable(e)) => {
                tracing::warn!("deferring {t}: {e}");
                batch.deferred.push(t.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(batch)
}

/// Label fractions over `verdicts`. All verdicts must share one mode.
pub fn aggregate_precision(verdicts: &[Verdict], seed: Option<u64>) -> Result<PrecisionReport, VerifyError> {
    let mode = verdicts.first().ok_or(VerifyError::EmptyInput)?.mode;
    let mut counts: BTreeMap<Label, usize> = Label::all(mode).into_iter().map(|l| (l, 0)).collect();
    for v in verdicts {
        if v.mode != mode || !v.label.fits(mode) {
            return Err(VerifyError::MixedModes);
        }
        *counts.get_mut(&v.label).expect("label fits mode") += 1;
    }
    let n = verdicts.len();
    let fractions = counts.iter().map(|(l, c)| (*l, *c as f64 / n as f64)).collect();
    Ok(PrecisionReport {
        mode,
        sample_size: n,
        counts,
        fractions,
        seed,
        deferred: 0,
    })
}

/// Side-by-side label fractions of two reports over the same label set,
/// plus the agreement rate on triples labelled in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub mode: Mode,
    pub rows: Vec<(Label, f64, f64)>,
    pub shared: usize,
    pub agreement: Option<f64>,
}

pub fn compare_verdicts(a: &[Verdict], b: &[Verdict]) -> Result<AgreementTable, VerifyError> {
    let ra = aggregate_precision(a, None)?;
    let rb = aggregate_precision(b, None)?;
    if ra.mode != rb.mode {
        return Err(VerifyError::MixedModes);
    }
    let by_triple: BTreeMap<&Triple, Label> = b.iter().map(|v| (&v.triple, v.label)).collect();
    let mut shared = 0;
    let mut same = 0;
    for v in a {
        if let Some(l) = by_triple.get(&v.triple) {
            shared += 1;
            same += usize::from(*l == v.label);
        }
    }
    Ok(AgreementTable {
        mode: ra.mode,
        rows: Label::all(ra.mode)
            .into_iter()
            .map(|l| (l, ra.fraction(l), rb.fraction(l)))
            .collect(),
        shared,
        agreement: (shared > 0).then(|| same as f64 / shared as f64),
    })
}

/// One document per subject holding one sentence per fact, e.g. a fixture
/// corpus built from ground truth.
pub fn corpus_from_triples<'a, I: IntoIterator<Item = &'a Triple>>(triples: I) -> CorpusBackend {
    let mut docs: BTreeMap<String, String> = BTreeMap::new();
    for t in triples {
        if t.is_meta() {
            continue;
        }
        let doc = docs.entry(t.subject.label().to_string()).or_default();
        doc.push_str(&statement_text(t));
        doc.push_str(".\n");
    }
    CorpusBackend::new(docs.into_iter().map(|(id, text)| Document { id, text }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(n: usize) -> TripleStore {
        TripleStore::from_triples((0..n).map(|i| Triple::entity(&format!("S{i}"), "p", "O").unwrap())).unwrap()
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let st = store(20);
        let mut s = sample_triples(&st, 20, 1, true).unwrap();
        s.sort();
        let mut all: Vec<Triple> = st.iter().collect();
        all.sort();
        assert_eq!(s, all);
        assert!(matches!(sample_triples(&st, 21, 1, true), Err(VerifyError::SampleTooLarge { .. })));
    }

    #[test]
    fn sampling_is_seeded() {
        let st = store(100);
        assert_eq!(sample_triples(&st, 10, 9, false).unwrap(), sample_triples(&st, 10, 9, false).unwrap());
        assert_ne!(sample_triples(&st, 10, 9, false).unwrap(), sample_triples(&st, 10, 10, false).unwrap());
    }

    #[test]
    fn meta_triples_can_be_excluded() {
        let st = TripleStore::from_triples([
            Triple::entity("A", "p", "B").unwrap(),
            Triple::literal("A", crate::model::BFS_LAYER, "0").unwrap(),
        ])
        .unwrap();
        assert_eq!(sample_triples(&st, 1, 0, true).unwrap()[0].predicate, "p");
        assert!(sample_triples(&st, 2, 0, true).is_err());
    }

    #[test]
    fn uniform_single_draws() {
        // 10k draws of 1 from 10: each count within 1000 +- 150.
        let st = store(10);
        let mut counts: BTreeMap<Triple, usize> = BTreeMap::new();
        for seed in 0..10_000 {
            *counts.entry(sample_triples(&st, 1, seed, false).unwrap().remove(0)).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| (850..=1150).contains(&c)), "{counts:?}");
    }

    #[test]
    fn surface_forms() {
        assert_eq!(surface_form("operatesIn"), "operates in");
        assert_eq!(surface_form("instanceOf"), "instance of");
        assert_eq!(surface_form("spouse"), "spouse");
        let t = Triple::entity("Suzhou Metro", "operatesIn", "Suzhou").unwrap();
        assert_eq!(statement_text(&t), "Suzhou Metro operates in Suzhou");
    }

    fn verdict(label: Label, mode: Mode) -> Verdict {
        Verdict {
            triple: Triple::entity("A", "p", "B").unwrap(),
            mode,
            label,
            evidence: vec![],
            judge: JudgeKind::ManualImport,
            annotator: None,
        }
    }

    #[test]
    fn table_one_fractions() {
        let mut vs = Vec::new();
        vs.extend((0..755).map(|_| verdict(Label::True, Mode::Triple)));
        vs.extend((0..50).map(|_| verdict(Label::Plausible, Mode::Triple)));
        vs.extend((0..195).map(|_| verdict(Label::False, Mode::Triple)));
        let r = aggregate_precision(&vs, Some(1)).unwrap();
        assert_eq!(r.sample_size, 1000);
        assert!((r.fraction(Label::True) - 0.755).abs() < 1e-12);
        assert!((r.fraction(Label::Plausible) - 0.05).abs() < 1e-12);
        assert!((r.fraction(Label::False) - 0.195).abs() < 1e-12);
        assert!((r.fractions.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_aggregates() {
        let r = aggregate_precision(&[verdict(Label::True, Mode::Triple)], None).unwrap();
        assert_eq!(r.fraction(Label::True), 1.0);
        assert_eq!(r.fraction(Label::False), 0.0);
        let r = aggregate_precision(&[verdict(Label::True, Mode::Triple), verdict(Label::False, Mode::Triple)], None).unwrap();
        assert_eq!((r.fraction(Label::True), r.fraction(Label::Plausible), r.fraction(Label::False)), (0.5, 0.0, 0.5));
        assert!(matches!(aggregate_precision(&[], None), Err(VerifyError::EmptyInput)));
        assert!(matches!(
            aggregate_precision(&[verdict(Label::True, Mode::Triple), verdict(Label::Verifiable, Mode::Subject)], None),
            Err(VerifyError::MixedModes)
        ));
    }

    #[test]
    fn fixture_corpus_verdicts() {
        let fact = Triple::entity("Suzhou Metro", "operatesIn", "Suzhou").unwrap();
        let corpus = corpus_from_triples([&fact]);
        let judge = RuleJudge;
        let v = verify_triple(&fact, Mode::Triple, &corpus, &judge, DEFAULT_TOP_K).unwrap();
        assert_eq!(v.label, Label::True);
        assert_eq!(v.evidence[0].snippet, "Suzhou Metro operates in Suzhou.");

        let absent = Triple::entity("Hangzhou", "locatedIn", "China").unwrap();
        assert_eq!(verify_triple(&absent, Mode::Triple, &corpus, &judge, 5).unwrap().label, Label::False);

        let empty = CorpusBackend::new(vec![]);
        assert_eq!(verify_triple(&fact, Mode::Triple, &empty, &judge, 5).unwrap().label, Label::False);
        assert_eq!(verify_triple(&fact, Mode::Subject, &empty, &judge, 5).unwrap().label, Label::Unverifiable);
        assert_eq!(verify_triple(&fact, Mode::Subject, &corpus, &judge, 5).unwrap().label, Label::Verifiable);
    }

    #[test]
    fn batch_defers_outages_and_keeps_order() {
        struct Down;
        impl SearchBackend for Down {
            fn search(&self, _: &str, _: usize) -> Result<Vec<Document>, VerifyError> {
                Err(VerifyError::BackendUnreachable("down".into()))
            }
        }
        let ts: Vec<Triple> = (0..9).map(|i| Triple::entity(&format!("S{i}"), "p", "O").unwrap()).collect();
        let batch = verify_batch(&ts, Mode::Triple, &Down, &RuleJudge, 5, 3, None).unwrap();
        assert!(batch.verdicts.is_empty());
        assert_eq!(batch.deferred, ts);

        let corpus = corpus_from_triples(&ts[..4]);
        let batch = verify_batch(&ts, Mode::Triple, &corpus, &RuleJudge, 5, 4, None).unwrap();
        let labels: Vec<Label> = batch.verdicts.iter().map(|v| v.label).collect();
        assert_eq!(&labels[..4], &[Label::True; 4]);
        assert!(labels[4..].iter().all(|l| *l == Label::False));
        assert_eq!(batch.verdicts.iter().map(|v| &v.triple).collect::<Vec<_>>(), ts.iter().collect::<Vec<_>>());
    }

    #[test]
    fn agreement_between_verdict_sets() {
        let a = vec![verdict(Label::True, Mode::Triple)];
        let mut b = vec![verdict(Label::False, Mode::Triple)];
        b[0].triple = Triple::entity("A", "p", "B").unwrap();
        let t = compare_verdicts(&a, &b).unwrap();
        assert_eq!(t.shared, 1);
        assert_eq!(t.agreement, Some(0.0));
        assert_eq!(t.rows[0], (Label::True, 1.0, 0.0));
    }
}
