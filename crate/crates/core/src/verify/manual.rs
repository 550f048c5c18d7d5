//! Manual assessments as CSV with columns `s,p,o_kind,o,label,annotator`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{JudgeKind, Label, Mode, Verdict, VerifyError};
use crate::model::{EntityId, Term, Triple};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    s: String,
    p: String,
    o_kind: String,
    o: String,
    label: String,
    #[serde(default)]
    annotator: String,
}

/// Reads manual verdicts; every label must belong to `mode`.
pub fn read_manual_csv<R: Read>(reader: R, mode: Mode) -> Result<Vec<Verdict>, VerifyError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let bad = |msg: String| VerifyError::Manual(format!("line {line}: {msg}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        let object = match row.o_kind.as_str() {
            "entity" => Term::entity(&row.o).map_err(|e| bad(e.to_string()))?,
            "literal" => Term::literal(row.o),
            other => return Err(bad(format!("o_kind must be entity or literal, got {other:?}"))),
        };
        let subject = EntityId::new(&row.s).map_err(|e| bad(e.to_string()))?;
        let triple = Triple::new(subject, &row.p, object).map_err(|e| bad(e.to_string()))?;
        let label = Label::parse(&row.label)
            .filter(|l| Label::all(mode).contains(l))
            .ok_or_else(|| bad(format!("label {:?} is not a {mode:?} label", row.label)))?;
        out.push(Verdict {
            triple,
            mode,
            label,
            evidence: vec![],
            judge: JudgeKind::ManualImport,
            annotator: (!row.annotator.is_empty()).then_some(row.annotator),
        });
    }
    Ok(out)
}

pub fn write_manual_csv<W: Write>(writer: W, verdicts: &[Verdict]) -> Result<(), VerifyError> {
    let mut w = csv::Writer::from_writer(writer);
    for v in verdicts {
        let (o_kind, o) = match &v.triple.object {
            Term::Entity(e) => ("entity", e.label().to_string()),
            Term::Literal(l) => ("literal", l.clone()),
        };
        w.serialize(Row {
            s: v.triple.subject.label().to_string(),
            p: v.triple.predicate.clone(),
            o_kind: o_kind.into(),
            o,
            label: format!("{:?}", v.label),
            annotator: v.annotator.clone().unwrap_or_default(),
        })
        .map_err(|e| VerifyError::Manual(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
