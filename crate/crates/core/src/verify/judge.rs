use serde_json::{json, Value};

use super::{statement_text, Document, Evidence, Label, Mode, VerifyError};
use crate::model::Triple;
use crate::oracle::remote::RemoteOracle;
use crate::oracle::{OracleError, PromptTemplate};

const SNIPPET_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgement {
    pub label: Label,
    pub evidence: Vec<Evidence>,
}

pub trait Judge: Send + Sync {
    fn judge(&self, triple: &Triple, mode: Mode, docs: &[Document]) -> Result<Judgement, VerifyError>;
}

/// Whole-word, case-insensitive containment.
fn mentions(haystack: &str, needle: &str) -> bool {
    let hay = haystack.to_lowercase();
    let needle = needle.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before = hay[..start].chars().next_back();
        let after = hay[end..].chars().next();
        if !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric) {
            return true;
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn first_line(docs: &[Document], pred: impl Fn(&str) -> bool) -> Option<(&Document, &str)> {
    docs.iter()
        .flat_map(|d| d.text.lines().map(move |l| (d, l.trim())))
        .find(|(_, l)| pred(l))
}

fn evidence(doc: &Document, line: &str) -> Evidence {
    Evidence {
        document: doc.id.clone(),
        snippet: line.chars().take(SNIPPET_CHARS).collect(),
    }
}

/// Deterministic judge over retrieved text.
///
/// Triple mode: True when a document line contains the statement text,
/// Plausible when a line mentions both subject and object, False
/// otherwise. Subject mode: Verifiable when any line mentions the subject.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl Judge for RuleJudge {
    fn judge(&self, triple: &Triple, mode: Mode, docs: &[Document]) -> Result<Judgement, VerifyError> {
        let subject = triple.subject.label();
        let found = |label: Label, hit: Option<(&Document, &str)>, otherwise: Label| match hit {
            Some((d, l)) => Judgement {
                label,
                evidence: vec![evidence(d, l)],
            },
            None => Judgement {
                label: otherwise,
                evidence: vec![],
            },
        };
        Ok(match mode {
            Mode::Subject => found(Label::Verifiable, first_line(docs, |l| mentions(l, subject)), Label::Unverifiable),
            Mode::Triple => {
                let statement = statement_text(triple);
                if let Some(hit) = first_line(docs, |l| mentions(l, &statement)) {
                    found(Label::True, Some(hit), Label::False)
                } else {
                    let object = triple.object.text();
                    found(
                        Label::Plausible,
                        first_line(docs, |l| mentions(l, subject) && mentions(l, object)),
                        Label::False,
                    )
                }
            }
        })
    }
}

fn judge_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "label": {"type": "string", "enum": ["True", "Plausible", "False"]},
            "evidence": {"type": "array", "items": {"type": "string"}}
        },
        "required": ["label", "evidence"],
        "additionalProperties": false
    })
}

/// Language-model judge using the bundled judge prompt.
pub struct RemoteJudge {
    oracle: RemoteOracle,
    template: PromptTemplate,
}

impl RemoteJudge {
    pub fn new(oracle: RemoteOracle) -> Self {
        RemoteJudge {
            oracle,
            template: PromptTemplate::judge(),
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }
}

/// Parses `{"label", "evidence": [doc ids]}`, keeping only cited ids that
/// were actually offered.
pub(super) fn parse_judgement(content: &str, mode: Mode, docs: &[Document]) -> Result<Judgement, VerifyError> {
    let v: Value = serde_json::from_str(content).map_err(|e| VerifyError::Judge(format!("not JSON: {e}")))?;
    let label = v
        .get("label")
        .and_then(Value::as_str)
        .and_then(Label::parse)
        .ok_or_else(|| VerifyError::Judge("missing or unknown label".into()))?;
    let label = match (mode, label) {
        (Mode::Subject, Label::True) => Label::Verifiable,
        (Mode::Subject, Label::False) => Label::Unverifiable,
        (_, l) => l,
    };
    let cited: Vec<&str> = v
        .get("evidence")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let evidence = docs
        .iter()
        .filter(|d| cited.contains(&d.id.as_str()))
        .map(|d| evidence(d, &d.text))
        .collect();
    Ok(Judgement { label, evidence })
}

impl Judge for RemoteJudge {
    fn judge(&self, triple: &Triple, mode: Mode, docs: &[Document]) -> Result<Judgement, VerifyError> {
        let statement = match mode {
            Mode::Triple => statement_text(triple),
            Mode::Subject => format!("{} exists.", triple.subject.label()),
        };
        let documents: String = docs.iter().map(|d| format!("[{}] {}\n", d.id, d.text)).collect();
        let user = self
            .template
            .user
            .replace("{statement}", &statement)
            .replace("{documents}", &documents);
        let (content, _) = self
            .oracle
            .chat(&self.template.system, &user, "verdict", judge_schema())
            .map_err(|e| match e {
                OracleError::Unreachable(m) => VerifyError::BackendUnreachable(m),
                other => VerifyError::Judge(other.to_string()),
            })?;
        parse_judgement(&content, mode, docs)
    }
}
