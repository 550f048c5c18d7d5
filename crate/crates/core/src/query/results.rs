use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use crate::model::{encode_entity_iri, Namespaces};

const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ResultValue {
    Entity(String),
    Property(String),
    Literal(String),
    /// An IRI outside the knowledge-base namespaces.
    Iri(String),
    Integer(i64),
    Decimal(f64),
}

impl ResultValue {
    /// Compact rendering: prefixed names for entities and properties.
    pub fn display(&self) -> String {
        match self {
            ResultValue::Entity(l) => format!("gptkb:{}", encode_entity_iri(l)),
            ResultValue::Property(l) => format!("gptkbp:{}", encode_entity_iri(l)),
            ResultValue::Literal(s) => format!("{s:?}"),
            ResultValue::Iri(i) => format!("<{i}>"),
            ResultValue::Integer(i) => i.to_string(),
            ResultValue::Decimal(d) => d.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ResultValue::Integer(i) => Some(*i as f64),
            ResultValue::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    fn to_sparql_json(&self, ns: &Namespaces) -> Json {
        match self {
            ResultValue::Entity(l) => json!({"type": "uri", "value": format!("{}{}", ns.entity_prefix, encode_entity_iri(l))}),
            ResultValue::Property(p) => json!({"type": "uri", "value": ns.property_iri(p)}),
            ResultValue::Iri(i) => json!({"type": "uri", "value": i}),
            ResultValue::Literal(s) => json!({"type": "literal", "value": s}),
            ResultValue::Integer(i) => json!({"type": "literal", "datatype": XSD_INTEGER, "value": i.to_string()}),
            ResultValue::Decimal(d) => json!({"type": "literal", "datatype": XSD_DECIMAL, "value": d.to_string()}),
        }
    }
}

/// Projected columns and rows; `None` cells are unbound.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub vars: Vec<String>,
    pub rows: Vec<Vec<Option<ResultValue>>>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }

    /// `{head: {vars}, results: {bindings}}`; unbound cells are omitted.
    pub fn to_sparql_json(&self, ns: &Namespaces) -> Json {
        let bindings: Vec<Json> = self
            .rows
            .iter()
            .map(|row| {
                let mut b = Map::new();
                for (var, cell) in self.vars.iter().zip(row) {
                    if let Some(v) = cell {
                        b.insert(var.clone(), v.to_sparql_json(ns));
                    }
                }
                Json::Object(b)
            })
            .collect();
        json!({"head": {"vars": self.vars}, "results": {"bindings": bindings}})
    }

    /// Space-aligned columns with a header and rule line.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|c| c.as_ref().map(ResultValue::display).unwrap_or_default()).collect())
            .collect();
        let mut widths: Vec<usize> = self.vars.iter().map(|v| v.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |items: &[String]| -> String {
            let padded: Vec<String> = items
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.vars);
        out += &line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for row in &cells {
            out += &line(row);
        }
        out
    }
}
