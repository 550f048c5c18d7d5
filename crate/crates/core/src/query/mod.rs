//! A SPARQL subset: basic graph patterns, `OPTIONAL`, `VALUES`, `BIND`,
//! sub-`SELECT`, `DISTINCT`, `GROUP BY` with `COUNT`, arithmetic
//! projections, `ORDER BY` and `LIMIT`.
//!
//! ```text
//! Query        ::= Prologue Select
//! Prologue     ::= ( 'PREFIX' PNAME_NS IRIREF )*
//! Select       ::= 'SELECT' 'DISTINCT'? ( '*' | ( Var | '(' Expr 'AS' Var ')' )+ )
//!                  'WHERE'? Group Modifiers
//! Modifiers    ::= ( 'GROUP' 'BY' Var+ )? ( 'ORDER' 'BY' OrderKey+ )? ( 'LIMIT' INTEGER )?
//! OrderKey     ::= ( 'ASC' | 'DESC' ) '(' Expr ')' | Var | '(' Expr ')'
//! Group        ::= '{' ( Select | Element* ) '}'
//! Element      ::= Triples | 'OPTIONAL' Group | 'VALUES' Values | 'BIND' '(' Expr 'AS' Var ')'
//!                | Group | '.'
//! Triples      ::= Term Verb Objects ( ';' ( Verb Objects )? )* '.'?
//! Objects      ::= Term ( ',' Term )*
//! Values       ::= Var '{' ValueTerm* '}' | '(' Var* ')' '{' ( '(' ValueTerm* ')' )* '}'
//! Expr         ::= Mul ( ( '+' | '-' ) Mul )*
//! Mul          ::= Unary ( ( '*' | '/' ) Unary )*
//! Unary        ::= '-' Unary | '(' Expr ')' | Var | Number | Term | Count
//! Count        ::= 'COUNT' '(' 'DISTINCT'? ( '*' | Expr ) ')'
//! ```
//!
//! Other SPARQL constructs (`FILTER`, `UNION`, `OFFSET`, other aggregates,
//! property paths, typed literals, ...) are rejected with
//! [`QueryError::Unsupported`] rather than evaluated partially.

mod eval;
mod lexer;
mod parser;
mod results;

use std::collections::BTreeMap;
use std::time::Duration;

pub use eval::{evaluate, explain, EvalOptions};
pub use parser::{parse_query, parse_query_with};
pub use results::{ResultTable, ResultValue};

pub const DEFAULT_MEMORY_LIMIT: usize = 1 << 30;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(100);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at {line}:{column}: found {found}, expected {}", expected.join(" or "))]
    Syntax {
        line: usize,
        column: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unsupported feature {feature} at {line}:{column}")]
    Unsupported { feature: String, line: usize, column: usize },
    #[error("query timed out")]
    Timeout,
    #[error("type error: {0}")]
    TypeError(String),
    #[error("query exceeded its memory budget of {limit} bytes")]
    ResourceExhausted { limit: usize },
}

pub type VarId = usize;

/// A constant as written in the query, before resolution against a store.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstTerm {
    Iri(String),
    Literal(String),
    Int(i64),
    Dec(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternTerm {
    Var(VarId),
    Const(ConstTerm),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriplePat {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(VarId),
    Const(ConstTerm),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Index into the enclosing select's aggregate list.
    Aggregate(usize),
}

/// `COUNT([DISTINCT] arg)`; `arg: None` is `*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub distinct: bool,
    pub arg: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValuesBlock {
    pub vars: Vec<VarId>,
    /// `None` cells are `UNDEF`.
    pub rows: Vec<Vec<Option<ConstTerm>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Triples(Vec<TriplePat>),
    Optional(GroupPattern),
    Values(ValuesBlock),
    Bind(Expr, VarId),
    SubSelect(Box<SelectQuery>),
    Group(GroupPattern),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupPattern {
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjItem {
    pub var: VarId,
    pub expr: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    All,
    Items(Vec<ProjItem>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub expr: Expr,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectQuery {
    pub distinct: bool,
    pub projection: Projection,
    pub pattern: GroupPattern,
    pub group_by: Vec<VarId>,
    pub aggregates: Vec<Aggregate>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
}

impl SelectQuery {
    pub fn is_aggregate(&self) -> bool {
        !self.group_by.is_empty() || !self.aggregates.is_empty()
    }

    /// Output columns in order.
    pub fn output_vars(&self) -> Vec<VarId> {
        match &self.projection {
            Projection::Items(items) => items.iter().map(|i| i.var).collect(),
            Projection::All => self.pattern.scope_vars().into_iter().collect(),
        }
    }
}

impl GroupPattern {
    /// Variables that may be bound by this pattern, ascending.
    pub fn scope_vars(&self) -> std::collections::BTreeSet<VarId> {
        let mut out = std::collections::BTreeSet::new();
        for e in &self.elements {
            e.add_scope_vars(&mut out);
        }
        out
    }

    /// Variables bound in every solution of this pattern.
    pub fn certain_vars(&self) -> std::collections::BTreeSet<VarId> {
        let mut out = std::collections::BTreeSet::new();
        for e in &self.elements {
            match e {
                Element::Triples(ts) => out.extend(ts.iter().flat_map(TriplePat::vars)),
                Element::Values(v) => {
                    for (i, var) in v.vars.iter().enumerate() {
                        if v.rows.iter().all(|r| r[i].is_some()) {
                            out.insert(*var);
                        }
                    }
                }
                Element::Group(g) => out.extend(g.certain_vars()),
                Element::SubSelect(s) if !s.is_aggregate() => {
                    let inner = s.pattern.certain_vars();
                    if let Projection::Items(items) = &s.projection {
                        out.extend(items.iter().filter(|i| i.expr.is_none() && inner.contains(&i.var)).map(|i| i.var));
                    } else {
                        out.extend(inner);
                    }
                }
                Element::SubSelect(_) | Element::Optional(_) | Element::Bind(..) => {}
            }
        }
        out
    }
}

impl Element {
    fn add_scope_vars(&self, out: &mut std::collections::BTreeSet<VarId>) {
        match self {
            Element::Triples(ts) => out.extend(ts.iter().flat_map(TriplePat::vars)),
            Element::Optional(g) | Element::Group(g) => out.extend(g.scope_vars()),
            Element::Values(v) => out.extend(v.vars.iter().copied()),
            Element::Bind(_, v) => {
                out.insert(*v);
            }
            Element::SubSelect(s) => out.extend(s.output_vars()),
        }
    }
}

impl TriplePat {
    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        [&self.subject, &self.predicate, &self.object]
            .into_iter()
            .filter_map(|t| match t {
                PatternTerm::Var(v) => Some(*v),
                PatternTerm::Const(_) => None,
            })
    }
}

impl Expr {
    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Expr::Var(v) => out.push(*v),
            Expr::Neg(x) => x.vars(out),
            Expr::Binary(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            Expr::Const(_) | Expr::Aggregate(_) => {}
        }
    }
}

/// A parsed query: prefixes, the variable table and the select tree.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub prefixes: BTreeMap<String, String>,
    /// Variable names indexed by [`VarId`].
    pub vars: Vec<String>,
    pub select: SelectQuery,
}

impl QueryPlan {
    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v]
    }
}
