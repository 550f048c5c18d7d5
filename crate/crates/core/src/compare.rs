//! Side-by-side comparison of several oracles on a fixed entity list.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{EntityId, Term, TermKind, Triple};
use crate::oracle::{Elicitor, EntityRecognizer, TokenBucket};
use crate::verify::{verify_triple, Judge, Label, Mode, SearchBackend, VerifyError};

pub const RUN_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_COMPARE_CAP: usize = 500;
/// Header line of entity list files.
pub const ENTITIES_HEADER: &str = "# kbforge-entities v1";

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("a comparison needs at least two models")]
    TooFewModels,
    #[error("entity list is empty")]
    NoEntities,
    #[error("model {model} uses prompt {found}, expected {expected}")]
    PromptMismatch { model: String, expected: String, found: String },
    #[error("duplicate model name {0}")]
    DuplicateModel(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("unsupported run format version {0}")]
    Version(u32),
    #[error("entity list line {line}: {msg}")]
    EntityList { line: usize, msg: String },
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One participant: a named oracle and the hash of the prompt it uses.
pub struct ComparedModel<'a> {
    pub name: String,
    pub prompt_hash: String,
    pub oracle: &'a dyn Elicitor,
}

/// Verification backend shared by all cells.
pub struct Verifier<'a> {
    pub backend: &'a dyn SearchBackend,
    pub judge: &'a dyn Judge,
    pub k: usize,
}

/// Execution settings for [`run_compare`].
#[derive(Clone, Copy)]
pub struct CompareSettings<'a> {
    pub cap: usize,
    pub workers: usize,
    pub limiter: Option<&'a TokenBucket>,
    /// Types objects as entities or literals; without one every object is
    /// a literal.
    pub ner: Option<&'a dyn EntityRecognizer>,
}

impl Default for CompareSettings<'_> {
    fn default() -> Self {
        CompareSettings {
            cap: DEFAULT_COMPARE_CAP,
            workers: 1,
            limiter: None,
            ner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTriple {
    pub p: String,
    pub o: String,
    pub o_kind: TermKind,
    /// `None` when verification was deferred.
    pub verdict: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub entity: EntityId,
    pub triples: Vec<CellTriple>,
    /// Set when the oracle call failed; the cell is then missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub triples: usize,
    #[serde(rename = "true")]
    pub true_: usize,
    pub plausible: usize,
    #[serde(rename = "false")]
    pub false_: usize,
}

impl Totals {
    fn add(&mut self, t: &CellTriple) {
        self.triples += 1;
        match t.verdict {
            Some(Label::True) => self.true_ += 1,
            Some(Label::Plausible) => self.plausible += 1,
            Some(Label::False) => self.false_ += 1,
            _ => {}
        }
    }

    fn of(triples: &[CellTriple]) -> Totals {
        let mut t = Totals::default();
        triples.iter().for_each(|x| t.add(x));
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRun {
    pub format_version: u32,
    pub models: Vec<String>,
    pub prompt_hash: String,
    pub entities: Vec<EntityId>,
    pub cells: Vec<Cell>,
    pub totals: BTreeMap<String, Totals>,
}

impl CompareRun {
    pub fn cell(&self, model: &str, entity: &EntityId) -> Option<&Cell> {
        self.cells.iter().find(|c| c.model == model && &c.entity == entity)
    }

    /// Recomputes per-model totals from the stored verdicts.
    pub fn recompute_totals(&self) -> BTreeMap<String, Totals> {
        let mut out: BTreeMap<String, Totals> = self.models.iter().map(|m| (m.clone(), Totals::default())).collect();
        for c in &self.cells {
            let t = out.entry(c.model.clone()).or_default();
            c.triples.iter().for_each(|x| t.add(x));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CompareError> {
        let run: CompareRun = serde_json::from_str(text)?;
        if run.format_version != RUN_FORMAT_VERSION {
            return Err(CompareError::Version(run.format_version));
        }
        Ok(run)
    }

    pub fn write(&self, path: &Path) -> Result<(), CompareError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CompareError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Parses an entity list: one label per line, `#` comments, blank lines
/// ignored, duplicates rejected.
pub fn parse_entity_list(text: &str) -> Result<Vec<EntityId>, CompareError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let e = EntityId::new(line).map_err(|e| CompareError::EntityList {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if !seen.insert(e.clone()) {
            return Err(CompareError::EntityList {
                line: i + 1,
                msg: format!("duplicate entity {e}"),
            });
        }
        out.push(e);
    }
    Ok(out)
}

/// The bundled 100-entity list.
pub fn default_entities() -> Vec<EntityId> {
    parse_entity_list(include_str!("../fixtures/compare_entities.txt")).expect("bundled list parses")
}

fn elicit_cell(
    model: &ComparedModel,
    entity: &EntityId,
    verifier: &Verifier,
    settings: &CompareSettings,
) -> Result<Cell, CompareError> {
    let missing = |e: String| Cell {
        model: model.name.clone(),
        entity: entity.clone(),
        triples: vec![],
        error: Some(e),
    };
    let result = match model.oracle.elicit(entity) {
        Ok(r) => r,
        Err(e) => return Ok(missing(e.to_string())),
    };
    let pairs: Vec<(String, String)> = result.pairs.into_iter().take(settings.cap).collect();
    let entities: HashSet<String> = match settings.ner {
        Some(ner) => {
            let objects: Vec<String> = pairs.iter().map(|(_, o)| o.clone()).collect();
            match ner.named_entities(&objects) {
                Ok(names) => names.into_iter().collect(),
                Err(e) => return Ok(missing(e.to_string())),
            }
        }
        None => HashSet::new(),
    };
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    for (p, o) in pairs {
        let object = if entities.contains(&o) {
            Term::entity(&o).unwrap_or(Term::Literal(o))
        } else {
            Term::Literal(o)
        };
        let Ok(t) = Triple::new(entity.clone(), &p, object) else {
            continue;
        };
        if !seen.insert(t.clone()) {
            continue;
        }
        let verdict = match verify_triple(&t, Mode::Triple, verifier.backend, verifier.judge, verifier.k) {
            Ok(v) => Some(v.label),
            Err(VerifyError::BackendUnreachable(_)) => None,
            Err(e) => return Err(e.into()),
        };
        triples.push(CellTriple {
            o_kind: t.object.kind(),
            o: t.object.text().to_string(),
            p: t.predicate,
            verdict,
        });
    }
    Ok(Cell {
        model: model.name.clone(),
        entity: entity.clone(),
        triples,
        error: None,
    })
}

/// Elicits every (model, entity) cell once and verifies every triple.
/// Oracle failures become missing cells; the run continues.
pub fn run_compare(
    models: &[ComparedModel],
    entities: &[EntityId],
    verifier: &Verifier,
    settings: &CompareSettings,
) -> Result<CompareRun, CompareError> {
    if models.len() < 2 {
        return Err(CompareError::TooFewModels);
    }
    if entities.is_empty() {
        return Err(CompareError::NoEntities);
    }
    let prompt_hash = models[0].prompt_hash.clone();
    let mut names = BTreeSet::new();
    for m in models {
        if m.prompt_hash != prompt_hash {
            return Err(CompareError::PromptMismatch {
                model: m.name.clone(),
                expected: prompt_hash,
                found: m.prompt_hash.clone(),
            });
        }
        if !names.insert(&m.name) {
            return Err(CompareError::DuplicateModel(m.name.clone()));
        }
    }
    let jobs: Vec<(&ComparedModel, &EntityId)> = models.iter().flat_map(|m| entities.iter().map(move |e| (m, e))).collect();
    let chunk = jobs.len().div_ceil(settings.workers.max(1));
    let results: Vec<Result<Cell, CompareError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|(m, e)| {
                            if let Some(l) = settings.limiter {
                                l.acquire();
                            }
                            elicit_cell(m, e, verifier, settings)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("compare worker panicked"))
            .collect()
    });
    let cells = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut run = CompareRun {
        format_version: RUN_FORMAT_VERSION,
        models: models.iter().map(|m| m.name.clone()).collect(),
        prompt_hash,
        entities: entities.to_vec(),
        cells,
        totals: BTreeMap::new(),
    };
    run.totals = run.recompute_totals();
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffCell {
    pub object: String,
    pub o_kind: TermKind,
    pub verdict: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRow {
    pub predicate: String,
    pub a: Option<DiffCell>,
    pub b: Option<DiffCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffView {
    pub entity: EntityId,
    pub model_a: String,
    pub model_b: String,
    pub totals_a: Totals,
    pub totals_b: Totals,
    pub rows: Vec<DiffRow>,
}

impl DiffView {
    /// The same view with the two sides swapped.
    pub fn mirrored(&self) -> DiffView {
        DiffView {
            entity: self.entity.clone(),
            model_a: self.model_b.clone(),
            model_b: self.model_a.clone(),
            totals_a: self.totals_b,
            totals_b: self.totals_a,
            rows: self
                .rows
                .iter()
                .map(|r| DiffRow {
                    predicate: r.predicate.clone(),
                    a: r.b.clone(),
                    b: r.a.clone(),
                })
                .collect(),
        }
    }
}

fn diff_cell(t: &CellTriple) -> DiffCell {
    DiffCell {
        object: t.o.clone(),
        o_kind: t.o_kind,
        verdict: t.verdict,
    }
}

/// Aligns two models' triples for one entity.
///
/// Predicates are listed in lexicographic order. Within a predicate, equal
/// objects pair first (sorted by object), then the remaining objects pair
/// up in response order; leftovers get an empty opposite cell.
pub fn diff_view(run: &CompareRun, model_a: &str, model_b: &str, entity: &EntityId) -> Result<DiffView, CompareError> {
    for m in [model_a, model_b] {
        if !run.models.iter().any(|x| x == m) {
            return Err(CompareError::UnknownModel(m.to_string()));
        }
    }
    if !run.entities.contains(entity) {
        return Err(CompareError::UnknownEntity(entity.to_string()));
    }
    let side = |m: &str| -> &[CellTriple] { run.cell(m, entity).map(|c| c.triples.as_slice()).unwrap_or(&[]) };
    let (ta, tb) = (side(model_a), side(model_b));
    let by_pred = |ts: &[CellTriple]| -> BTreeMap<String, Vec<usize>> {
        let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in ts.iter().enumerate() {
            m.entry(t.p.clone()).or_default().push(i);
        }
        m
    };
    let (pa, pb) = (by_pred(ta), by_pred(tb));
    let preds: BTreeSet<&String> = pa.keys().chain(pb.keys()).collect();
    let mut rows = Vec::new();
    for p in preds {
        let mut la: Vec<usize> = pa.get(p).cloned().unwrap_or_default();
        let mut lb: Vec<usize> = pb.get(p).cloned().unwrap_or_default();
        let mut matched: Vec<(usize, usize)> = Vec::new();
        la.retain(|&i| match lb.iter().position(|&j| tb[j].o == ta[i].o && tb[j].o_kind == ta[i].o_kind) {
            Some(pos) => {
                matched.push((i, lb.remove(pos)));
                false
            }
            None => true,
        });
        matched.sort_by(|x, y| ta[x.0].o.cmp(&ta[y.0].o));
        for (i, j) in matched {
            rows.push(DiffRow {
                predicate: p.clone(),
                a: Some(diff_cell(&ta[i])),
                b: Some(diff_cell(&tb[j])),
            });
        }
        for k in 0..la.len().max(lb.len()) {
            rows.push(DiffRow {
                predicate: p.clone(),
                a: la.get(k).map(|&i| diff_cell(&ta[i])),
                b: lb.get(k).map(|&j| diff_cell(&tb[j])),
            });
        }
    }
    Ok(DiffView {
        entity: entity.clone(),
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        totals_a: Totals::of(ta),
        totals_b: Totals::of(tb),
        rows,
    })
}
