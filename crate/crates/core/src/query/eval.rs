//! Streaming evaluator.
//!
//! Group patterns are evaluated left to right by substitution: each element
//! extends the current partial solution in place and calls the continuation
//! for every extension. Sub-selects, and `OPTIONAL` / nested groups whose
//! meaning would change under substitution, are evaluated once on their own
//! and joined in. Aggregation folds the solution stream into per-group
//! accumulators, so a grouped count never materializes its input.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::results::{ResultTable, ResultValue};
use super::{
    BinOp, ConstTerm, Element, Expr, GroupPattern, PatternTerm, Projection, QueryError, QueryPlan, SelectQuery, VarId,
    DEFAULT_MEMORY_LIMIT, DEFAULT_TIMEOUT,
};
use crate::model::{decode_entity_iri, encode_entity_iri, normalize_label, EntityId, Namespaces, INSTANCE_OF};
use crate::store::{IndexOrder, NodeKind, TermId, TripleStore};

/// Rows between deadline checks.
const TICK_MASK: u64 = 1023;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub timeout: Option<Duration>,
    /// Approximate bytes of intermediate state a query may hold.
    pub memory_limit: usize,
    pub namespaces: Namespaces,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            timeout: Some(DEFAULT_TIMEOUT),
            memory_limit: DEFAULT_MEMORY_LIMIT,
            namespaces: Namespaces::default(),
        }
    }
}

impl EvalOptions {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn with_memory_limit(mut self, bytes: usize) -> Self {
        self.memory_limit = bytes;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum ExtKind {
    Entity,
    Property,
    Literal,
    Iri,
}

/// A bound value. Terms in the store are ids; constants the store does not
/// contain are kept as text so they can still be projected.
#[derive(Debug, Clone)]
pub(crate) enum Value {
    Node(TermId),
    Ext(ExtKind, Arc<str>),
    Int(i64),
    Dec(f64),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Node(a), Value::Node(b)) => a == b,
            (Value::Ext(k, a), Value::Ext(l, b)) => k == l && a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Dec(a), Value::Dec(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, h: &mut H) {
        match self {
            Value::Node(id) => (0u8, id).hash(h),
            Value::Ext(k, s) => (1u8, k, s).hash(h),
            Value::Int(i) => (2u8, i).hash(h),
            Value::Dec(d) => (3u8, d.to_bits()).hash(h),
        }
    }
}

type Row = Vec<Option<Value>>;
type Sink<'s> = dyn FnMut(&mut Row) -> Result<bool, QueryError> + 's;

#[derive(Debug, Clone)]
enum CTerm {
    Var(VarId),
    /// `None`: a constant absent from the store, which matches nothing.
    Val(Option<TermId>),
}

#[derive(Debug)]
struct CTriple {
    terms: [CTerm; 3],
    text: String,
    est: f64,
    index: IndexOrder,
}

#[derive(Debug, Clone)]
enum CExpr {
    Var(VarId),
    Val(Value),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Agg(usize),
}

#[derive(Debug)]
struct CGroup {
    elems: Vec<CElem>,
}

#[derive(Debug)]
enum TableSource {
    Group(CGroup),
    Select(Box<CSelect>),
}

#[derive(Debug)]
struct Table {
    source: TableSource,
    cache: RefCell<Option<Rc<Vec<Row>>>>,
}

#[derive(Debug)]
enum CElem {
    Bgp(Vec<CTriple>),
    Values { vars: Vec<VarId>, rows: Vec<Vec<Option<Value>>> },
    Bind(CExpr, VarId),
    Inline(CGroup),
    Join(Table),
    OptionalInline(CGroup),
    OptionalTable(Table),
}

#[derive(Debug)]
struct CAgg {
    distinct: bool,
    arg: Option<CExpr>,
}

#[derive(Debug)]
struct CSelect {
    distinct: bool,
    aggregate: bool,
    group_by: Vec<VarId>,
    aggs: Vec<CAgg>,
    items: Vec<(VarId, Option<CExpr>)>,
    out_vars: Vec<VarId>,
    order: Vec<(CExpr, bool)>,
    limit: Option<u64>,
    pattern: CGroup,
}

enum Acc {
    Count(u64),
    Distinct(HashSet<Value>),
    DistinctRows(HashSet<Row>),
}

struct Ctx<'a> {
    store: &'a TripleStore,
    ns: &'a Namespaces,
    deadline: Option<Instant>,
    ticks: Cell<u64>,
    mem: Cell<usize>,
    mem_limit: usize,
    width: usize,
    vars: &'a [String],
    distinct_predicates: usize,
    instance_of: Option<TermId>,
}

/// Evaluates `plan` against `store`.
pub fn evaluate(plan: &QueryPlan, store: &TripleStore, opts: &EvalOptions) -> Result<ResultTable, QueryError> {
    let ctx = Ctx::new(plan, store, opts);
    let select = ctx.compile_select(&plan.select, &BTreeSet::new());
    let rows = ctx.eval_select(&select)?;
    Ok(ResultTable {
        vars: select.out_vars.iter().map(|&v| plan.vars[v].clone()).collect(),
        rows: rows
            .into_iter()
            .map(|r| select.out_vars.iter().map(|&v| r[v].as_ref().map(|x| ctx.result_value(x))).collect())
            .collect(),
    })
}

/// Describes the join order and index choices the evaluator will use.
pub fn explain(plan: &QueryPlan, store: &TripleStore, ns: &Namespaces) -> String {
    let opts = EvalOptions {
        namespaces: ns.clone(),
        ..EvalOptions::default()
    };
    let ctx = Ctx::new(plan, store, &opts);
    let select = ctx.compile_select(&plan.select, &BTreeSet::new());
    let mut out = String::new();
    ctx.explain_select(&select, 0, &mut out);
    out
}

fn pad(depth: usize) -> String {
    "  ".repeat(depth)
}

impl<'a> Ctx<'a> {
    fn new(plan: &'a QueryPlan, store: &'a TripleStore, opts: &'a EvalOptions) -> Self {
        Ctx {
            store,
            ns: &opts.namespaces,
            deadline: opts.timeout.map(|t| Instant::now() + t),
            ticks: Cell::new(0),
            mem: Cell::new(0),
            mem_limit: opts.memory_limit,
            width: plan.vars.len(),
            vars: &plan.vars,
            distinct_predicates: store.predicates().count(),
            instance_of: store.property_id(INSTANCE_OF),
        }
    }

    fn tick(&self) -> Result<(), QueryError> {
        let t = self.ticks.get() + 1;
        self.ticks.set(t);
        if t & TICK_MASK == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(QueryError::Timeout);
                }
            }
        }
        Ok(())
    }

    fn charge(&self, bytes: usize) -> Result<(), QueryError> {
        let used = self.mem.get() + bytes;
        self.mem.set(used);
        if used > self.mem_limit {
            return Err(QueryError::ResourceExhausted { limit: self.mem_limit });
        }
        Ok(())
    }

    fn row_bytes(&self) -> usize {
        24 + self.width * std::mem::size_of::<Option<Value>>()
    }

    // ---- constant resolution ----

    fn resolve_iri(&self, iri: &str) -> Value {
        let lookup = |prefix: &str, kind: ExtKind| -> Option<Value> {
            let local = iri.strip_prefix(prefix)?;
            let label = decode_entity_iri(local).ok()?;
            let canonical = normalize_label(&label).ok().filter(|n| *n == label);
            let id = canonical.and_then(|l| match kind {
                ExtKind::Entity => self.store.entity_id(&EntityId::new(&l).ok()?),
                _ => self.store.property_id(&l),
            });
            Some(match id {
                Some(id) => Value::Node(id),
                None => Value::Ext(kind, Arc::from(label.as_str())),
            })
        };
        lookup(&self.ns.entity_prefix, ExtKind::Entity)
            .or_else(|| lookup(&self.ns.property_prefix, ExtKind::Property))
            .unwrap_or_else(|| Value::Ext(ExtKind::Iri, Arc::from(iri)))
    }

    fn resolve(&self, c: &ConstTerm) -> Value {
        match c {
            ConstTerm::Iri(iri) => self.resolve_iri(iri),
            ConstTerm::Literal(s) => match self.store.literal_id(s) {
                Some(id) => Value::Node(id),
                None => Value::Ext(ExtKind::Literal, Arc::from(s.as_str())),
            },
            ConstTerm::Int(i) => Value::Int(*i),
            ConstTerm::Dec(d) => Value::Dec(*d),
        }
    }

    fn describe(&self, v: &Value) -> String {
        match v {
            Value::Node(id) => match self.store.node(*id) {
                (NodeKind::Entity, s) => format!("gptkb:{}", encode_entity_iri(s)),
                (NodeKind::Property, s) => format!("gptkbp:{}", encode_entity_iri(s)),
                (NodeKind::Literal, s) => format!("{s:?}"),
            },
            Value::Ext(ExtKind::Literal, s) => format!("{s:?}"),
            Value::Ext(ExtKind::Iri, s) => format!("<{s}>"),
            Value::Ext(ExtKind::Entity, s) => format!("gptkb:{}", encode_entity_iri(s)),
            Value::Ext(ExtKind::Property, s) => format!("gptkbp:{}", encode_entity_iri(s)),
            Value::Int(i) => i.to_string(),
            Value::Dec(d) => d.to_string(),
        }
    }

    fn result_value(&self, v: &Value) -> ResultValue {
        match v {
            Value::Node(id) => match self.store.node(*id) {
                (NodeKind::Entity, s) => ResultValue::Entity(s.to_string()),
                (NodeKind::Property, s) => ResultValue::Property(s.to_string()),
                (NodeKind::Literal, s) => ResultValue::Literal(s.to_string()),
            },
            Value::Ext(k, s) => match k {
                ExtKind::Entity => ResultValue::Entity(s.to_string()),
                ExtKind::Property => ResultValue::Property(s.to_string()),
                ExtKind::Literal => ResultValue::Literal(s.to_string()),
                ExtKind::Iri => ResultValue::Iri(s.to_string()),
            },
            Value::Int(i) => ResultValue::Integer(*i),
            Value::Dec(d) => ResultValue::Decimal(*d),
        }
    }

    // ---- compilation ----

    fn compile_expr(&self, e: &Expr) -> CExpr {
        match e {
            Expr::Var(v) => CExpr::Var(*v),
            Expr::Const(c) => CExpr::Val(self.resolve(c)),
            Expr::Neg(x) => CExpr::Neg(Box::new(self.compile_expr(x))),
            Expr::Binary(op, a, b) => CExpr::Bin(*op, Box::new(self.compile_expr(a)), Box::new(self.compile_expr(b))),
            Expr::Aggregate(i) => CExpr::Agg(*i),
        }
    }

    fn compile_term(&self, t: &PatternTerm) -> (CTerm, String) {
        match t {
            PatternTerm::Var(v) => (CTerm::Var(*v), format!("?{}", self.vars[*v])),
            PatternTerm::Const(c) => {
                let v = self.resolve(c);
                let text = self.describe(&v);
                match v {
                    Value::Node(id) => (CTerm::Val(Some(id)), text),
                    _ => (CTerm::Val(None), text),
                }
            }
        }
    }

    fn estimate(&self, terms: &[CTerm; 3], bound: &BTreeSet<VarId>) -> f64 {
        let is_bound = |c: &CTerm| match c {
            CTerm::Var(v) => bound.contains(v),
            CTerm::Val(_) => true,
        };
        if terms.iter().any(|t| matches!(t, CTerm::Val(None))) {
            return 0.0;
        }
        let n = self.store.len() as f64;
        let mut est = match terms[1] {
            CTerm::Val(Some(p)) => self.store.predicate_count_id(p) as f64,
            CTerm::Var(v) if bound.contains(&v) => n / self.distinct_predicates.max(1) as f64,
            _ => n,
        };
        let base = est;
        if is_bound(&terms[0]) {
            est /= self.store.distinct_subjects().max(1) as f64;
        }
        if is_bound(&terms[2]) {
            match (&terms[1], &terms[2]) {
                (CTerm::Val(Some(p)), CTerm::Val(Some(o))) if Some(*p) == self.instance_of && !is_bound(&terms[0]) => {
                    est = self.store.class_count_id(*o) as f64;
                }
                _ => est /= self.store.distinct_objects().max(1) as f64,
            }
        }
        if base > 0.0 {
            est = est.max(base.min(1.0));
        }
        est
    }

    fn compile_bgp(&self, pats: &[super::TriplePat], bound: &mut BTreeSet<VarId>) -> Vec<CTriple> {
        let mut pending: Vec<([CTerm; 3], String)> = pats
            .iter()
            .map(|t| {
                let (s, st) = self.compile_term(&t.subject);
                let (p, pt) = self.compile_term(&t.predicate);
                let (o, ot) = self.compile_term(&t.object);
                ([s, p, o], format!("{st} {pt} {ot}"))
            })
            .collect();
        let mut out = Vec::with_capacity(pending.len());
        while !pending.is_empty() {
            let (best, est) = pending
                .iter()
                .enumerate()
                .map(|(i, (terms, _))| (i, self.estimate(terms, bound)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .expect("non-empty");
            let (terms, text) = pending.remove(best);
            let is_bound = |c: &CTerm| match c {
                CTerm::Var(v) => bound.contains(v),
                CTerm::Val(_) => true,
            };
            let index = IndexOrder::for_bound(is_bound(&terms[0]), is_bound(&terms[1]), is_bound(&terms[2]));
            for t in &terms {
                if let CTerm::Var(v) = t {
                    bound.insert(*v);
                }
            }
            out.push(CTriple { terms, text, est, index });
        }
        out
    }

    /// A group can be evaluated by substitution into the enclosing row when
    /// that cannot change its meaning: no nested OPTIONAL, and every BIND
    /// reads only variables the group itself has certainly bound.
    fn substitutable(g: &GroupPattern) -> bool {
        let mut certain = BTreeSet::new();
        for e in &g.elements {
            match e {
                Element::Optional(_) => return false,
                Element::Bind(expr, _) => {
                    let mut vs = Vec::new();
                    expr.vars(&mut vs);
                    if !vs.iter().all(|v| certain.contains(v)) {
                        return false;
                    }
                }
                Element::Group(inner) if !Self::substitutable(inner) => return false,
                _ => {}
            }
            certain.extend(
                GroupPattern {
                    elements: vec![e.clone()],
                }
                .certain_vars(),
            );
        }
        true
    }

    fn table(&self, source: TableSource) -> Table {
        Table {
            source,
            cache: RefCell::new(None),
        }
    }

    fn compile_group(&self, g: &GroupPattern, bound: &BTreeSet<VarId>) -> CGroup {
        let mut bound = bound.clone();
        let mut elems = Vec::new();
        for e in &g.elements {
            let c = match e {
                Element::Triples(ts) => CElem::Bgp(self.compile_bgp(ts, &mut bound)),
                Element::Values(v) => CElem::Values {
                    vars: v.vars.clone(),
                    rows: v
                        .rows
                        .iter()
                        .map(|r| r.iter().map(|c| c.as_ref().map(|c| self.resolve(c))).collect())
                        .collect(),
                },
                Element::Bind(expr, v) => CElem::Bind(self.compile_expr(expr), *v),
                Element::SubSelect(s) => {
                    CElem::Join(self.table(TableSource::Select(Box::new(self.compile_select(s, &BTreeSet::new())))))
                }
                Element::Group(inner) if Self::substitutable(inner) => CElem::Inline(self.compile_group(inner, &bound)),
                Element::Group(inner) => {
                    CElem::Join(self.table(TableSource::Group(self.compile_group(inner, &BTreeSet::new()))))
                }
                Element::Optional(inner) if Self::substitutable(inner) => {
                    CElem::OptionalInline(self.compile_group(inner, &bound))
                }
                Element::Optional(inner) => {
                    CElem::OptionalTable(self.table(TableSource::Group(self.compile_group(inner, &BTreeSet::new()))))
                }
            };
            bound.extend(
                GroupPattern {
                    elements: vec![e.clone()],
                }
                .certain_vars(),
            );
            elems.push(c);
        }
        CGroup { elems }
    }

    fn compile_select(&self, s: &SelectQuery, bound: &BTreeSet<VarId>) -> CSelect {
        let items = match &s.projection {
            Projection::All => Vec::new(),
            Projection::Items(items) => items
                .iter()
                .map(|i| (i.var, i.expr.as_ref().map(|e| self.compile_expr(e))))
                .collect(),
        };
        CSelect {
            distinct: s.distinct,
            aggregate: s.is_aggregate(),
            group_by: s.group_by.clone(),
            aggs: s
                .aggregates
                .iter()
                .map(|a| CAgg {
                    distinct: a.distinct,
                    arg: a.arg.as_ref().map(|e| self.compile_expr(e)),
                })
                .collect(),
            items,
            out_vars: s.output_vars(),
            order: s
                .order_by
                .iter()
                .map(|k| (self.compile_expr(&k.expr), k.descending))
                .collect(),
            limit: s.limit,
            pattern: self.compile_group(&s.pattern, bound),
        }
    }

    // ---- expressions ----

    fn numeric(&self, v: &Value, op: &str) -> Result<f64, QueryError> {
        match v {
            Value::Int(i) => Ok(*i as f64),
            Value::Dec(d) => Ok(*d),
            other => Err(QueryError::TypeError(format!("{op} applied to non-numeric {}", self.describe(other)))),
        }
    }

    fn arith(&self, op: BinOp, a: &Value, b: &Value) -> Result<Option<Value>, QueryError> {
        let sym = match op {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        };
        let (x, y) = (self.numeric(a, sym)?, self.numeric(b, sym)?);
        if let (Value::Int(i), Value::Int(j), false) = (a, b, op == BinOp::Div) {
            let exact = match op {
                BinOp::Add => i.checked_add(*j),
                BinOp::Sub => i.checked_sub(*j),
                _ => i.checked_mul(*j),
            };
            if let Some(r) = exact {
                return Ok(Some(Value::Int(r)));
            }
        }
        Ok(match op {
            BinOp::Add => Some(Value::Dec(x + y)),
            BinOp::Sub => Some(Value::Dec(x - y)),
            BinOp::Mul => Some(Value::Dec(x * y)),
            BinOp::Div if y == 0.0 => None,
            BinOp::Div => Some(Value::Dec(x / y)),
        })
    }

    /// `Ok(None)` is an unbound result (unbound input or division by zero).
    fn eval_expr(&self, e: &CExpr, row: &Row, aggs: Option<&[Value]>) -> Result<Option<Value>, QueryError> {
        Ok(match e {
            CExpr::Var(v) => row[*v].clone(),
            CExpr::Val(v) => Some(v.clone()),
            CExpr::Agg(i) => aggs.and_then(|a| a.get(*i)).cloned(),
            CExpr::Neg(x) => match self.eval_expr(x, row, aggs)? {
                None => None,
                Some(Value::Int(i)) => Some(i.checked_neg().map_or(Value::Dec(-(i as f64)), Value::Int)),
                Some(other) => Some(Value::Dec(-self.numeric(&other, "-")?)),
            },
            CExpr::Bin(op, a, b) => {
                let x = self.eval_expr(a, row, aggs)?;
                let y = self.eval_expr(b, row, aggs)?;
                match (x, y) {
                    (Some(x), Some(y)) => self.arith(*op, &x, &y)?,
                    (Some(v), None) | (None, Some(v)) => {
                        self.numeric(&v, "arithmetic")?;
                        None
                    }
                    (None, None) => None,
                }
            }
        })
    }

    // ---- ordering ----

    fn rank_and_text<'v>(&'v self, v: &'v Value) -> (u8, Option<&'v str>) {
        match v {
            Value::Node(id) => match self.store.node(*id) {
                (NodeKind::Entity, s) => (1, Some(s)),
                (NodeKind::Property, s) => (2, Some(s)),
                (NodeKind::Literal, s) => (4, Some(s)),
            },
            Value::Ext(ExtKind::Entity, s) => (1, Some(s)),
            Value::Ext(ExtKind::Property | ExtKind::Iri, s) => (2, Some(s)),
            Value::Ext(ExtKind::Literal, s) => (4, Some(s)),
            Value::Int(_) | Value::Dec(_) => (3, None),
        }
    }

    /// Total order: unbound < entity < property/IRI < number < literal.
    fn cmp_values(&self, a: &Option<Value>, b: &Option<Value>) -> Ordering {
        let (a, b) = match (a, b) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(a), Some(b)) => (a, b),
        };
        let (ra, ta) = self.rank_and_text(a);
        let (rb, tb) = self.rank_and_text(b);
        ra.cmp(&rb).then_with(|| match (a, b) {
            (Value::Int(x), Value::Int(y)) => x.cmp(y),
            (Value::Int(x), Value::Dec(y)) => (*x as f64).total_cmp(y).then(Ordering::Less),
            (Value::Dec(x), Value::Int(y)) => x.total_cmp(&(*y as f64)).then(Ordering::Greater),
            (Value::Dec(x), Value::Dec(y)) => x.total_cmp(y),
            _ => ta.cmp(&tb).then_with(|| {
                let ext = |v: &Value| matches!(v, Value::Ext(ExtKind::Iri, _));
                ext(a).cmp(&ext(b))
            }),
        })
    }

    // ---- pattern evaluation ----

    fn run(&self, elems: &[CElem], row: &mut Row, sink: &mut Sink) -> Result<bool, QueryError> {
        let Some((first, rest)) = elems.split_first() else {
            return sink(row);
        };
        match first {
            CElem::Bgp(ts) => self.run_bgp(ts, rest, row, sink),
            CElem::Values { vars, rows } => {
                for cells in rows {
                    self.tick()?;
                    if !self.merge_and_run(vars, cells, rest, row, sink)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            CElem::Bind(e, v) => {
                let val = self.eval_expr(e, row, None)?;
                match (&row[*v], val) {
                    (Some(cur), Some(x)) if *cur != x => Ok(true),
                    (None, Some(x)) => {
                        row[*v] = Some(x);
                        let r = self.run(rest, row, sink);
                        row[*v] = None;
                        r
                    }
                    _ => self.run(rest, row, sink),
                }
            }
            CElem::Inline(g) => self.run(&g.elems, row, &mut |r: &mut Row| self.run(rest, r, &mut *sink)),
            CElem::OptionalInline(g) => {
                let mut matched = false;
                let go_on = self.run(&g.elems, row, &mut |r: &mut Row| {
                    matched = true;
                    self.run(rest, r, &mut *sink)
                })?;
                if !go_on {
                    return Ok(false);
                }
                if matched {
                    Ok(true)
                } else {
                    self.run(rest, row, sink)
                }
            }
            CElem::Join(t) | CElem::OptionalTable(t) => {
                let optional = matches!(first, CElem::OptionalTable(_));
                let rows = self.materialize(t)?;
                let mut matched = false;
                let all: Vec<VarId> = (0..self.width).collect();
                for cells in rows.iter() {
                    self.tick()?;
                    if !self.compatible(&all, cells, row) {
                        continue;
                    }
                    matched = true;
                    if !self.merge_and_run(&all, cells, rest, row, sink)? {
                        return Ok(false);
                    }
                }
                if optional && !matched {
                    return self.run(rest, row, sink);
                }
                Ok(true)
            }
        }
    }

    fn compatible(&self, vars: &[VarId], cells: &[Option<Value>], row: &Row) -> bool {
        vars.iter().zip(cells).all(|(v, c)| match (c, &row[*v]) {
            (Some(x), Some(y)) => x == y,
            _ => true,
        })
    }

    fn merge_and_run(
        &self,
        vars: &[VarId],
        cells: &[Option<Value>],
        rest: &[CElem],
        row: &mut Row,
        sink: &mut Sink,
    ) -> Result<bool, QueryError> {
        if !self.compatible(vars, cells, row) {
            return Ok(true);
        }
        let mut set = Vec::new();
        for (v, c) in vars.iter().zip(cells) {
            if let (Some(x), None) = (c, &row[*v]) {
                row[*v] = Some(x.clone());
                set.push(*v);
            }
        }
        let r = self.run(rest, row, sink);
        for v in set {
            row[v] = None;
        }
        r
    }

    fn run_bgp(&self, ts: &[CTriple], rest: &[CElem], row: &mut Row, sink: &mut Sink) -> Result<bool, QueryError> {
        let Some((t, more)) = ts.split_first() else {
            return self.run(rest, row, sink);
        };
        let mut ids = [None; 3];
        for (i, term) in t.terms.iter().enumerate() {
            ids[i] = match term {
                CTerm::Val(Some(id)) => Some(*id),
                CTerm::Val(None) => return Ok(true),
                CTerm::Var(v) => match &row[*v] {
                    Some(Value::Node(id)) => Some(*id),
                    Some(_) => return Ok(true),
                    None => None,
                },
            };
        }
        self.tick()?;
        for found in self.store.scan(ids[0], ids[1], ids[2]) {
            self.tick()?;
            let mut set: [Option<VarId>; 3] = [None; 3];
            let mut ok = true;
            for i in 0..3 {
                if ids[i].is_some() {
                    continue;
                }
                let CTerm::Var(v) = t.terms[i] else { unreachable!() };
                match &row[v] {
                    // Bound earlier in this same pattern, as in `?x ?p ?x`.
                    Some(Value::Node(prev)) if *prev == found[i] => {}
                    Some(_) => {
                        ok = false;
                        break;
                    }
                    None => {
                        row[v] = Some(Value::Node(found[i]));
                        set[i] = Some(v);
                    }
                }
            }
            let go_on = if ok { self.run_bgp(more, rest, row, sink) } else { Ok(true) };
            for v in set.into_iter().flatten() {
                row[v] = None;
            }
            if !go_on? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn materialize(&self, t: &Table) -> Result<Rc<Vec<Row>>, QueryError> {
        if let Some(rows) = t.cache.borrow().as_ref() {
            return Ok(rows.clone());
        }
        let rows = match &t.source {
            TableSource::Select(s) => self.eval_select(s)?,
            TableSource::Group(g) => {
                let mut out = Vec::new();
                let mut row = vec![None; self.width];
                let bytes = self.row_bytes();
                self.run(&g.elems, &mut row, &mut |r: &mut Row| {
                    self.charge(bytes)?;
                    out.push(r.clone());
                    Ok(true)
                })?;
                out
            }
        };
        let rows = Rc::new(rows);
        *t.cache.borrow_mut() = Some(rows.clone());
        Ok(rows)
    }

    // ---- select ----

    fn project(&self, s: &CSelect, row: &Row) -> Row {
        let mut out = vec![None; self.width];
        for &v in &s.out_vars {
            out[v] = row[v].clone();
        }
        out
    }

    fn eval_select(&self, s: &CSelect) -> Result<Vec<Row>, QueryError> {
        let mut keyed: Vec<(Vec<Option<Value>>, Row)> = Vec::new();
        let mut out: Vec<Row> = Vec::new();
        let mut seen: HashSet<Row> = HashSet::new();
        let limit = s.limit.map(|l| usize::try_from(l).unwrap_or(usize::MAX));
        let ordered = !s.order.is_empty();
        let bytes = self.row_bytes();

        // Collects one finished (pre-projection) row; false once LIMIT is met.
        let mut emit = |row: &Row, aggs: Option<&[Value]>| -> Result<bool, QueryError> {
            if ordered {
                let keys = s
                    .order
                    .iter()
                    .map(|(e, _)| self.eval_expr(e, row, aggs))
                    .collect::<Result<Vec<_>, _>>()?;
                self.charge(bytes)?;
                keyed.push((keys, self.project(s, row)));
                return Ok(true);
            }
            let p = self.project(s, row);
            if s.distinct {
                if seen.contains(&p) {
                    return Ok(true);
                }
                self.charge(bytes)?;
                seen.insert(p.clone());
            }
            self.charge(bytes)?;
            out.push(p);
            Ok(limit.is_none_or(|l| out.len() < l))
        };

        if limit == Some(0) {
            return Ok(Vec::new());
        }
        let mut start = vec![None; self.width];
        if s.aggregate {
            let groups = self.group(s, &mut start)?;
            for (key, accs) in groups {
                let mut row = vec![None; self.width];
                for (v, k) in s.group_by.iter().zip(key) {
                    row[*v] = k;
                }
                let aggs: Vec<Value> = accs
                    .into_iter()
                    .map(|a| {
                        Value::Int(match a {
                            Acc::Count(n) => n as i64,
                            Acc::Distinct(set) => set.len() as i64,
                            Acc::DistinctRows(set) => set.len() as i64,
                        })
                    })
                    .collect();
                for (v, e) in &s.items {
                    if let Some(e) = e {
                        row[*v] = self.eval_expr(e, &row, Some(&aggs))?;
                    }
                }
                if !emit(&row, Some(&aggs))? {
                    break;
                }
            }
        } else {
            self.run(&s.pattern.elems, &mut start, &mut |row: &mut Row| {
                let mut assigned = Vec::new();
                for (v, e) in &s.items {
                    if let Some(e) = e {
                        row[*v] = self.eval_expr(e, row, None)?;
                        assigned.push(*v);
                    }
                }
                let r = emit(row, None);
                for v in assigned {
                    row[v] = None;
                }
                r
            })?;
        }

        if !ordered {
            return Ok(out);
        }
        keyed.sort_by(|(ka, ra), (kb, rb)| {
            for ((a, b), (_, desc)) in ka.iter().zip(kb).zip(&s.order) {
                let o = self.cmp_values(a, b);
                let o = if *desc { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            s.out_vars
                .iter()
                .map(|&v| self.cmp_values(&ra[v], &rb[v]))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        let mut result = Vec::new();
        let mut seen = HashSet::new();
        for (_, r) in keyed {
            if limit.is_some_and(|l| result.len() >= l) {
                break;
            }
            if s.distinct && !seen.insert(r.clone()) {
                continue;
            }
            result.push(r);
        }
        Ok(result)
    }

    fn fresh_accs(&self, s: &CSelect) -> Vec<Acc> {
        s.aggs
            .iter()
            .map(|a| match (a.distinct, &a.arg) {
                (false, _) => Acc::Count(0),
                (true, Some(_)) => Acc::Distinct(HashSet::new()),
                (true, None) => Acc::DistinctRows(HashSet::new()),
            })
            .collect()
    }

    #[allow(clippy::type_complexity)]
    fn group(&self, s: &CSelect, start: &mut Row) -> Result<Vec<(Vec<Option<Value>>, Vec<Acc>)>, QueryError> {
        let mut index: HashMap<Vec<Option<Value>>, usize> = HashMap::new();
        let mut groups: Vec<(Vec<Option<Value>>, Vec<Acc>)> = Vec::new();
        let key_bytes = 64 + s.group_by.len() * std::mem::size_of::<Option<Value>>();
        self.run(&s.pattern.elems, start, &mut |row: &mut Row| {
            let key: Vec<Option<Value>> = s.group_by.iter().map(|v| row[*v].clone()).collect();
            let g = match index.get(&key) {
                Some(&g) => g,
                None => {
                    self.charge(key_bytes * 2 + s.aggs.len() * 16)?;
                    index.insert(key.clone(), groups.len());
                    groups.push((key, self.fresh_accs(s)));
                    groups.len() - 1
                }
            };
            for (agg, acc) in s.aggs.iter().zip(groups[g].1.iter_mut()) {
                match (acc, &agg.arg) {
                    (Acc::Count(n), None) => *n += 1,
                    (Acc::Count(n), Some(e)) => {
                        if self.eval_expr(e, row, None)?.is_some() {
                            *n += 1;
                        }
                    }
                    (Acc::Distinct(set), Some(e)) => {
                        if let Some(v) = self.eval_expr(e, row, None)? {
                            if set.insert(v) {
                                self.charge(48)?;
                            }
                        }
                    }
                    (Acc::DistinctRows(set), _) => {
                        if set.insert(row.clone()) {
                            self.charge(self.row_bytes())?;
                        }
                    }
                    (Acc::Distinct(_), None) => unreachable!(),
                }
            }
            Ok(true)
        })?;
        if groups.is_empty() && s.group_by.is_empty() {
            groups.push((Vec::new(), self.fresh_accs(s)));
        }
        Ok(groups)
    }

    // ---- explain ----

    fn explain_select(&self, s: &CSelect, depth: usize, out: &mut String) {
        let p = pad(depth);
        let cols: Vec<String> = s.out_vars.iter().map(|v| format!("?{}", self.vars[*v])).collect();
        let _ = writeln!(
            out,
            "{p}SELECT{} {}",
            if s.distinct { " DISTINCT" } else { "" },
            cols.join(" ")
        );
        if s.aggregate {
            let keys: Vec<String> = s.group_by.iter().map(|v| format!("?{}", self.vars[*v])).collect();
            let _ = writeln!(
                out,
                "{p}  GROUP BY [{}] with {} aggregate(s), streamed",
                keys.join(" "),
                s.aggs.len()
            );
        }
        if !s.order.is_empty() {
            let _ = writeln!(out, "{p}  ORDER BY {} key(s)", s.order.len());
        }
        if let Some(l) = s.limit {
            let _ = writeln!(out, "{p}  LIMIT {l}");
        }
        self.explain_group(&s.pattern, depth + 1, out);
    }

    fn explain_group(&self, g: &CGroup, depth: usize, out: &mut String) {
        let p = pad(depth);
        for e in &g.elems {
            match e {
                CElem::Bgp(ts) => {
                    let _ = writeln!(out, "{p}BGP");
                    for (i, t) in ts.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{p}  {}. {} scan ({}) est. {:.0}",
                            i + 1,
                            t.index.name(),
                            t.text,
                            t.est
                        );
                    }
                }
                CElem::Values { vars, rows } => {
                    let names: Vec<String> = vars.iter().map(|v| format!("?{}", self.vars[*v])).collect();
                    let _ = writeln!(out, "{p}VALUES {} ({} rows)", names.join(" "), rows.len());
                }
                CElem::Bind(_, v) => {
                    let _ = writeln!(out, "{p}BIND ?{}", self.vars[*v]);
                }
                CElem::Inline(g) => {
                    let _ = writeln!(out, "{p}GROUP (inline)");
                    self.explain_group(g, depth + 1, out);
                }
                CElem::OptionalInline(g) => {
                    let _ = writeln!(out, "{p}OPTIONAL (substituted)");
                    self.explain_group(g, depth + 1, out);
                }
                CElem::Join(t) | CElem::OptionalTable(t) => {
                    let kind = if matches!(e, CElem::Join(_)) { "JOIN" } else { "OPTIONAL" };
                    let _ = writeln!(out, "{p}{kind} (materialized)");
                    match &t.source {
                        TableSource::Select(s) => self.explain_select(s, depth + 1, out),
                        TableSource::Group(g) => self.explain_group(g, depth + 1, out),
                    }
                }
            }
        }
    }
}
